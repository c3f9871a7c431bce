import { createApi } from "./api.js";
import { initApp } from "./app.js";

// Served by the same process that answers /api, so the base URL is empty.
document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (root !== null) {
    void initApp(root, createApi(""));
  }
});
