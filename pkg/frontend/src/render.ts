import type { ConflictEntry, ResolveSession } from "./session.js";
import { choiceEquals } from "./session.js";
import type {
  ChoiceDto,
  ConflictDto,
  DocumentView,
  PayloadDto,
  SchemaInfo,
  SessionState,
  SpanDto,
} from "./types.js";

export interface AppView {
  state: SessionState | null;
  session: ResolveSession | null;
  banner: string | null;
  applyNote: string | null;
}

export function escapeHtml(text: string): string {
  return text.replace(/[&<>"']/g, (ch) => {
    switch (ch) {
      case "&": return "&amp;";
      case "<": return "&lt;";
      case ">": return "&gt;";
      case '"': return "&quot;";
      default: return "&#39;";
    }
  });
}

export interface TextMark {
  start: number;
  end: number;
  cls: string;
  title?: string;
}

// Boundary sweep so overlapping marks nest into combined classes instead of
// producing broken tags. The text content always survives unchanged.
export function renderHighlightedText(text: string, marks: TextMark[]): string {
  const clamped = marks
    .map((m) => ({
      ...m,
      start: Math.max(0, Math.min(m.start, text.length)),
      end: Math.max(0, Math.min(m.end, text.length)),
    }))
    .filter((m) => m.start < m.end);
  const points = new Set<number>([0, text.length]);
  for (const m of clamped) {
    points.add(m.start);
    points.add(m.end);
  }
  const cuts = [...points].sort((a, b) => a - b);
  let html = "";
  for (let i = 0; i < cuts.length - 1; i += 1) {
    const lo = cuts[i];
    const hi = cuts[i + 1];
    if (lo >= hi) continue;
    const segment = escapeHtml(text.slice(lo, hi));
    const active = clamped.filter((m) => m.start <= lo && hi <= m.end);
    if (active.length === 0) {
      html += segment;
      continue;
    }
    const cls = [...new Set(active.map((m) => m.cls))].join(" ");
    const titles = [...new Set(active.map((m) => m.title).filter(Boolean))] as string[];
    const title = titles.length ? ` title="${escapeHtml(titles.join(", "))}"` : "";
    html += `<mark class="${cls}"${title}>${segment}</mark>`;
  }
  return html;
}

export function renderSpanExcerpt(
  text: string,
  spans: SpanDto[],
  cls: string,
  pad = 28,
): string {
  if (spans.length === 0) return `<span class="absent">no span</span>`;
  const lo = Math.max(0, Math.min(...spans.map((s) => s.start)) - pad);
  const hi = Math.min(text.length, Math.max(...spans.map((s) => s.end)) + pad);
  const marks = spans.map((s) => ({
    start: s.start - lo,
    end: s.end - lo,
    cls,
    title: s.label,
  }));
  const head = lo > 0 ? "&hellip; " : "";
  const tail = hi < text.length ? " &hellip;" : "";
  return `${head}${renderHighlightedText(text.slice(lo, hi), marks)}${tail}`;
}

function spanSummary(spans: SpanDto[]): string {
  return spans.map((s) => `${s.label} [${s.start}, ${s.end})`).join(", ");
}

function sideChipText(payload: PayloadDto | null): string {
  if (payload === null) return "no span";
  if (payload.kind === "class") return payload.value;
  if (payload.kind === "score") return String(payload.value);
  return spanSummary(payload.spans);
}

function kindLabel(kind: ConflictDto["kind"]): string {
  return kind.replace(/_/g, " ");
}

function customChoicePayload(choice: ChoiceDto | null): PayloadDto | null {
  if (choice === null || typeof choice === "string") return null;
  return choice.custom;
}

// Prefill for the custom span editor: the current custom pick, else the
// first span either side offers, else a blank row.
function customSpanSeed(
  entry: ConflictEntry,
  schema: SchemaInfo,
  custom: PayloadDto | null,
): SpanDto {
  if (custom !== null && custom.kind === "spans" && custom.spans.length > 0) {
    return custom.spans[0];
  }
  for (const side of [entry.conflict.side_a, entry.conflict.side_b]) {
    if (side !== null && side.kind === "spans" && side.spans.length > 0) {
      return side.spans[0];
    }
  }
  return { start: 0, end: 0, label: schema.classes?.[0] ?? "" };
}

function renderCustomControl(entry: ConflictEntry, schema: SchemaInfo): string {
  const cid = escapeHtml(entry.conflict.conflict_id);
  const custom = customChoicePayload(entry.choice);
  if (schema.task_kind === "doc_class") {
    const current = custom !== null && custom.kind === "class" ? custom.value : "";
    const options = (schema.classes ?? [])
      .map((cls) => {
        const sel = cls === current ? " selected" : "";
        return `<option value="${escapeHtml(cls)}"${sel}>${escapeHtml(cls)}</option>`;
      })
      .join("");
    return (
      `<label class="custom">custom class ` +
      `<select data-action="custom-class" data-conflict="${cid}">` +
      `<option value="">&ndash;</option>${options}</select></label>`
    );
  }
  if (schema.task_kind === "pair_regress") {
    const current = custom !== null && custom.kind === "score" ? String(custom.value) : "";
    return (
      `<label class="custom">custom score ` +
      `<input type="number" step="any" data-action="custom-score" ` +
      `data-conflict="${cid}" value="${escapeHtml(current)}"></label>`
    );
  }
  const seed = customSpanSeed(entry, schema, custom);
  const labelOptions = (schema.classes ?? [])
    .map((cls) => {
      const sel = cls === seed.label ? " selected" : "";
      return `<option value="${escapeHtml(cls)}"${sel}>${escapeHtml(cls)}</option>`;
    })
    .join("");
  return (
    `<span class="custom">custom span ` +
    `<input type="number" class="custom-start" value="${seed.start}" aria-label="start"> ` +
    `<input type="number" class="custom-end" value="${seed.end}" aria-label="end"> ` +
    `<select class="custom-label" aria-label="label">${labelOptions}</select> ` +
    `<button data-action="custom-span" data-conflict="${cid}">set</button></span>`
  );
}

function renderChoiceState(entry: ConflictEntry): string {
  if (entry.choice === null) {
    return `<p class="choice-state" data-state="unset">no choice yet</p>`;
  }
  const name = typeof entry.choice === "string" ? entry.choice : "custom";
  const saved = choiceEquals(entry.choice, entry.saved);
  const state = saved ? "saved" : "unsaved";
  return `<p class="choice-state" data-state="${state}">choice: ${name} &middot; ${state}</p>`;
}

export function renderConflict(
  entry: ConflictEntry,
  schema: SchemaInfo,
  docText: string,
): string {
  const conflict = entry.conflict;
  const cid = escapeHtml(conflict.conflict_id);
  const spanTask = schema.task_kind === "span_label";
  const sides = (["a", "b"] as const)
    .map((side) => {
      const payload = side === "a" ? conflict.side_a : conflict.side_b;
      const selected = entry.choice === side ? " selected" : "";
      const chip =
        `<button class="chip side-${side}${selected}" data-action="choose" ` +
        `data-conflict="${cid}" data-choice="${side}">` +
        `${escapeHtml(sideChipText(payload))}</button>`;
      const excerpt =
        spanTask && payload !== null && payload.kind === "spans"
          ? `<p class="excerpt">${renderSpanExcerpt(docText, payload.spans, `side-${side}`)}</p>`
          : "";
      return `<div class="side">${chip}${excerpt}</div>`;
    })
    .join("");
  const noneSelected = entry.choice === "none" ? " selected" : "";
  const customSelected =
    entry.choice !== null && typeof entry.choice !== "string" ? " has-custom" : "";
  const error = entry.error
    ? `<p class="inline-error" role="alert">${escapeHtml(entry.error)}</p>`
    : "";
  return (
    `<li class="conflict${customSelected}" data-conflict="${cid}" data-kind="${conflict.kind}">` +
    `<span class="kind">${kindLabel(conflict.kind)}</span>` +
    `<div class="options">${sides}` +
    `<button class="chip none${noneSelected}" data-action="choose" ` +
    `data-conflict="${cid}" data-choice="none">neither</button>` +
    `${renderCustomControl(entry, schema)}</div>` +
    `${renderChoiceState(entry)}${error}</li>`
  );
}

export function renderDocument(doc: DocumentView, session: ResolveSession): string {
  const schema = session.schema;
  const marks: TextMark[] = [];
  for (const payload of doc.agreed) {
    if (payload.kind !== "spans") continue;
    for (const span of payload.spans) {
      marks.push({ start: span.start, end: span.end, cls: "agreed", title: span.label });
    }
  }
  for (const conflict of doc.conflicts) {
    for (const side of ["a", "b"] as const) {
      const payload = side === "a" ? conflict.side_a : conflict.side_b;
      if (payload === null || payload.kind !== "spans") continue;
      for (const span of payload.spans) {
        marks.push({ start: span.start, end: span.end, cls: `side-${side}`, title: span.label });
      }
    }
  }
  const agreedChips = doc.agreed
    .filter((p) => p.kind !== "spans")
    .map((p) => `<span class="chip agreed">${escapeHtml(sideChipText(p))}</span>`)
    .join("");
  const agreedRow = agreedChips ? `<p class="agreed-row">agreed: ${agreedChips}</p>` : "";
  const textB =
    doc.text_b !== undefined
      ? `<p class="doc-text doc-text-b">${escapeHtml(doc.text_b)}</p>`
      : "";
  const conflicts = doc.conflicts
    .map((c) => renderConflict(session.entry(c.conflict_id), schema, doc.text))
    .join("");
  return (
    `<section class="doc-card" data-doc="${escapeHtml(doc.doc_id)}">` +
    `<h3>${escapeHtml(doc.doc_id)}</h3>` +
    `<p class="doc-text">${renderHighlightedText(doc.text, marks)}</p>` +
    `${textB}${agreedRow}<ol class="conflicts">${conflicts}</ol></section>`
  );
}

export function renderApp(view: AppView): string {
  const banner = view.banner
    ? `<div class="banner" role="alert">${escapeHtml(view.banner)} ` +
      `<button data-action="retry">retry</button></div>`
    : "";
  if (view.state === null || view.session === null) {
    return `<header><h1>resolve conflicts</h1></header>${banner}`;
  }
  const state = view.state;
  const session = view.session;
  const counts = session.counts();
  const header =
    `<header><h1>resolve conflicts</h1>` +
    `<p class="meta">iteration ${state.iteration} &middot; ` +
    `${escapeHtml(state.schema.task_kind)}</p></header>`;
  const body =
    state.total_conflicts === 0
      ? `<p class="empty">nothing to resolve</p>`
      : session.documents.map((doc) => renderDocument(doc, session)).join("");
  const saveDisabled = counts.dirty === 0 ? " disabled" : "";
  const applyDisabled = state.complete ? "" : " disabled";
  const applyNote = view.applyNote
    ? `<span class="apply-note">${escapeHtml(view.applyNote)}</span>`
    : "";
  const footer =
    `<footer class="controls">` +
    `<button id="save" data-action="save"${saveDisabled}>save choices</button>` +
    `<span class="progress">${state.resolved} / ${state.total_conflicts} resolved</span>` +
    `<button id="apply" data-action="apply"${applyDisabled}>apply resolutions</button>` +
    `${applyNote}</footer>`;
  return `${header}${banner}${body}${footer}`;
}
