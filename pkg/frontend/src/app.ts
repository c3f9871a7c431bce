import type { ResolveApi } from "./api.js";
import type { AppView } from "./render.js";
import { renderApp } from "./render.js";
import { ResolveSession, snapSpans } from "./session.js";
import type { ChoiceDto, SpanDto } from "./types.js";

const UNREACHABLE = "server unreachable; your choices are kept locally";

export interface AppController {
  root: HTMLElement;
  api: ResolveApi;
  view: AppView;
  load(): Promise<void>;
  save(): Promise<void>;
}

export async function initApp(root: HTMLElement, api: ResolveApi): Promise<AppController> {
  let saving = false;
  const view: AppView = { state: null, session: null, banner: null, applyNote: null };

  function rerender(): void {
    root.innerHTML = renderApp(view);
  }

  async function load(): Promise<void> {
    try {
      const state = await api.fetchState();
      const bundle = await api.fetchConflicts();
      if (view.session === null) {
        view.session = new ResolveSession(bundle, state.schema);
      } else {
        view.session.absorb(bundle);
      }
      view.state = state;
      view.banner = null;
    } catch {
      view.banner = UNREACHABLE;
    }
    rerender();
  }

  async function save(): Promise<void> {
    const session = view.session;
    if (session === null || saving) return;
    const records = session.pendingRecords();
    if (records.length === 0) return;
    saving = true;
    try {
      const outcome = await api.submitResolutions(records);
      session.markSubmitted(records, outcome);
      // The server's acknowledgement is the source of truth for progress.
      view.state = await api.fetchState();
      view.banner = null;
    } catch {
      view.banner = UNREACHABLE;
    } finally {
      saving = false;
    }
    rerender();
  }

  function setChoiceFromUi(conflictId: string, choice: ChoiceDto): void {
    const session = view.session;
    if (session === null) return;
    try {
      session.setChoice(conflictId, choice);
    } catch (err) {
      session.entry(conflictId).error = err instanceof Error ? err.message : String(err);
    }
    rerender();
  }

  function readCustomSpan(card: Element): SpanDto {
    const start = Number((card.querySelector(".custom-start") as HTMLInputElement).value);
    const end = Number((card.querySelector(".custom-end") as HTMLInputElement).value);
    const label = (card.querySelector(".custom-label") as HTMLSelectElement).value;
    return { start, end, label };
  }

  root.addEventListener("click", (event) => {
    const target = (event.target as Element | null)?.closest("[data-action]");
    if (target === null || target === undefined || !root.contains(target)) return;
    const action = (target as HTMLElement).dataset.action;
    const conflictId = (target as HTMLElement).dataset.conflict ?? "";
    if (action === "choose") {
      const choice = (target as HTMLElement).dataset.choice as "a" | "b" | "none";
      setChoiceFromUi(conflictId, choice);
    } else if (action === "custom-span") {
      const session = view.session;
      const card = target.closest(".conflict");
      if (session === null || card === null) return;
      try {
        const entry = session.entry(conflictId);
        const spans = snapSpans([readCustomSpan(card)], entry.conflict, entry.textLength);
        session.setChoice(conflictId, { custom: { kind: "spans", spans } });
      } catch (err) {
        session.entry(conflictId).error = err instanceof Error ? err.message : String(err);
      }
      rerender();
    } else if (action === "save") {
      void save();
    } else if (action === "retry") {
      void load();
    } else if (action === "apply") {
      view.applyNote =
        "all conflicts resolved; run the apply step from the project CLI to fold them in";
      rerender();
    }
  });

  root.addEventListener("change", (event) => {
    const target = event.target as HTMLElement | null;
    if (target === null || !target.dataset.action) return;
    const conflictId = target.dataset.conflict ?? "";
    if (target.dataset.action === "custom-class") {
      const value = (target as HTMLSelectElement).value;
      if (value === "") {
        view.session?.revertChoice(conflictId);
        rerender();
      } else {
        setChoiceFromUi(conflictId, { custom: { kind: "class", value } });
      }
    } else if (target.dataset.action === "custom-score") {
      const value = Number((target as HTMLInputElement).value);
      setChoiceFromUi(conflictId, { custom: { kind: "score", value } });
    }
  });

  await load();
  return { root, api, view, load, save };
}
