import type {
  ChoiceDto,
  ConflictBundle,
  ConflictDto,
  DocumentView,
  PayloadDto,
  ResolutionDto,
  SchemaInfo,
  SpanDto,
  SubmitOutcome,
} from "./types.js";

// Local choice state per conflict. `choice` is what the reviewer picked in
// this browser; `saved` is the last value the server acknowledged. A record
// is pending exactly when the two differ and a choice is set.
export interface ConflictEntry {
  conflict: ConflictDto;
  docId: string;
  textLength: number;
  choice: ChoiceDto | null;
  saved: ChoiceDto | null;
  error: string | null;
}

function payloadEquals(x: PayloadDto, y: PayloadDto): boolean {
  if (x.kind !== y.kind) return false;
  if (x.kind === "spans" && y.kind === "spans") {
    if (x.spans.length !== y.spans.length) return false;
    return x.spans.every(
      (s, i) =>
        s.start === y.spans[i].start &&
        s.end === y.spans[i].end &&
        s.label === y.spans[i].label,
    );
  }
  if (x.kind !== "spans" && y.kind !== "spans") return x.value === y.value;
  return false;
}

export function choiceEquals(x: ChoiceDto | null, y: ChoiceDto | null): boolean {
  if (x === null || y === null) return x === y;
  if (typeof x === "string" || typeof y === "string") return x === y;
  return payloadEquals(x.custom, y.custom);
}

// The disputed region of a conflict: the tightest window covering every span
// on either side. Custom span edits must stay inside it so they cannot
// collide with agreed fragments or with other conflicts.
export function disputedRegion(conflict: ConflictDto): { start: number; end: number } | null {
  let start = Infinity;
  let end = -Infinity;
  for (const side of [conflict.side_a, conflict.side_b]) {
    if (side === null || side.kind !== "spans") continue;
    for (const span of side.spans) {
      start = Math.min(start, span.start);
      end = Math.max(end, span.end);
    }
  }
  if (!Number.isFinite(start) || !Number.isFinite(end)) return null;
  return { start, end };
}

// Snap edited spans to valid boundaries: integers, start < end <= length,
// clamped into the conflict's disputed region. Throws when a span collapses.
export function snapSpans(
  raw: SpanDto[],
  conflict: ConflictDto,
  textLength: number,
): SpanDto[] {
  const region = disputedRegion(conflict);
  if (region === null) {
    throw new Error("conflict has no span sides to edit");
  }
  const lo = Math.max(0, region.start);
  const hi = Math.min(textLength, region.end);
  const snapped: SpanDto[] = [];
  for (const span of raw) {
    let start = Math.round(Math.min(span.start, span.end));
    let end = Math.round(Math.max(span.start, span.end));
    start = Math.min(Math.max(start, lo), hi);
    end = Math.min(Math.max(end, lo), hi);
    if (start >= end) {
      throw new Error(
        `span (${span.start}, ${span.end}) collapses after snapping to ${lo}..${hi}`,
      );
    }
    snapped.push({ start, end, label: span.label });
  }
  snapped.sort((a, b) => a.start - b.start || a.end - b.end);
  for (let i = 1; i < snapped.length; i += 1) {
    if (snapped[i].start < snapped[i - 1].end) {
      throw new Error("custom spans overlap each other");
    }
  }
  return snapped;
}

function checkCustomPayload(
  payload: PayloadDto,
  entry: ConflictEntry,
  schema: SchemaInfo,
): void {
  const kind = schema.task_kind;
  if (kind === "doc_class") {
    if (payload.kind !== "class") throw new Error("this conflict needs a class value");
    if (!(schema.classes ?? []).includes(payload.value)) {
      throw new Error(`unknown class ${JSON.stringify(payload.value)}`);
    }
    return;
  }
  if (kind === "pair_regress") {
    if (payload.kind !== "score") throw new Error("this conflict needs a score value");
    if (!Number.isFinite(payload.value)) throw new Error("score must be a finite number");
    const lo = schema.range_lo ?? -Infinity;
    const hi = schema.range_hi ?? Infinity;
    if (payload.value < lo || payload.value > hi) {
      throw new Error(`score ${payload.value} outside ${lo}..${hi}`);
    }
    return;
  }
  if (payload.kind !== "spans") throw new Error("this conflict needs a spans value");
  if (payload.spans.length === 0) {
    throw new Error("custom spans are empty; pick 'none' to drop the region instead");
  }
  const region = disputedRegion(entry.conflict);
  for (const span of payload.spans) {
    if (!Number.isInteger(span.start) || !Number.isInteger(span.end)) {
      throw new Error("span offsets must be integers");
    }
    if (!(span.start >= 0 && span.start < span.end && span.end <= entry.textLength)) {
      throw new Error(`span (${span.start}, ${span.end}) outside the document`);
    }
    if (region !== null && (span.start < region.start || span.end > region.end)) {
      throw new Error(
        `span (${span.start}, ${span.end}) leaves the disputed region ${region.start}..${region.end}`,
      );
    }
    if (!(schema.classes ?? []).includes(span.label)) {
      throw new Error(`unknown span label ${JSON.stringify(span.label)}`);
    }
  }
}

// Client-side mirror of the conflict session: documents in server order,
// one entry per conflict, saved values seeded from the server's resolution
// list so a reload restores exactly what was already filed.
export class ResolveSession {
  documents: DocumentView[] = [];
  readonly schema: SchemaInfo;
  private entries = new Map<string, ConflictEntry>();

  constructor(bundle: ConflictBundle, schema: SchemaInfo) {
    this.schema = schema;
    this.absorb(bundle);
  }

  // Rebuild from a fresh server bundle. Local unsaved choices survive so a
  // retry after a failed save or a background refresh never loses work.
  absorb(bundle: ConflictBundle): void {
    const savedByConflict = new Map<string, ChoiceDto>();
    for (const record of bundle.resolutions) {
      savedByConflict.set(record.conflict_id, record.choice);
    }
    const previous = this.entries;
    this.entries = new Map();
    this.documents = bundle.documents;
    for (const doc of bundle.documents) {
      for (const conflict of doc.conflicts) {
        const saved = savedByConflict.get(conflict.conflict_id) ?? null;
        const old = previous.get(conflict.conflict_id);
        const dirty = old !== undefined && !choiceEquals(old.choice, old.saved);
        this.entries.set(conflict.conflict_id, {
          conflict,
          docId: doc.doc_id,
          textLength: doc.text.length,
          choice: dirty ? old.choice : saved,
          saved,
          error: old?.error ?? null,
        });
      }
    }
  }

  entry(conflictId: string): ConflictEntry {
    const found = this.entries.get(conflictId);
    if (found === undefined) throw new Error(`unknown conflict ${conflictId}`);
    return found;
  }

  allEntries(): ConflictEntry[] {
    const out: ConflictEntry[] = [];
    for (const doc of this.documents) {
      for (const conflict of doc.conflicts) {
        out.push(this.entry(conflict.conflict_id));
      }
    }
    return out;
  }

  // Throws when a custom payload would be rejected at apply time; the caller
  // surfaces the message inline. Side picks and "none" are always valid.
  setChoice(conflictId: string, choice: ChoiceDto): void {
    const entry = this.entry(conflictId);
    if (typeof choice !== "string") {
      checkCustomPayload(choice.custom, entry, this.schema);
    } else if (choice !== "a" && choice !== "b" && choice !== "none") {
      throw new Error(`unknown choice ${JSON.stringify(choice)}`);
    }
    entry.choice = choice;
    entry.error = null;
  }

  revertChoice(conflictId: string): void {
    const entry = this.entry(conflictId);
    entry.choice = entry.saved;
    entry.error = null;
  }

  // Only set-and-unsaved choices go on the wire: partial saves are fine and
  // re-sending an acknowledged record would be redundant.
  pendingRecords(): ResolutionDto[] {
    const out: ResolutionDto[] = [];
    for (const entry of this.allEntries()) {
      if (entry.choice !== null && !choiceEquals(entry.choice, entry.saved)) {
        out.push({ conflict_id: entry.conflict.conflict_id, choice: entry.choice });
      }
    }
    return out;
  }

  // Fold a submit acknowledgement back in. Rejected records keep their local
  // choice and carry the server's message; everything else becomes saved.
  markSubmitted(records: ResolutionDto[], outcome: SubmitOutcome): void {
    const rejectedById = new Map(outcome.rejected.map((r) => [r.conflict_id, r]));
    for (const record of records) {
      const entry = this.entries.get(record.conflict_id);
      if (entry === undefined) continue;
      const rejection = rejectedById.get(record.conflict_id);
      if (rejection !== undefined) {
        entry.error = `${rejection.code}: ${rejection.message}`;
      } else {
        entry.saved = record.choice;
        entry.error = null;
      }
    }
  }

  counts(): { total: number; set: number; dirty: number } {
    let set = 0;
    let dirty = 0;
    for (const entry of this.entries.values()) {
      if (entry.choice !== null) set += 1;
      if (entry.choice !== null && !choiceEquals(entry.choice, entry.saved)) dirty += 1;
    }
    return { total: this.entries.size, set, dirty };
  }
}
