// Wire types mirrored from the annoloop HTTP API. Field names must match the
// server's JSON exactly; the UI never invents fields of its own.

export type TaskKind = "doc_class" | "span_label" | "pair_regress";

export interface SchemaInfo {
  task_kind: TaskKind;
  classes?: string[];
  range_lo?: number;
  range_hi?: number;
}

export interface SpanDto {
  start: number;
  end: number;
  label: string;
}

export type PayloadDto =
  | { kind: "class"; value: string }
  | { kind: "score"; value: number }
  | { kind: "spans"; spans: SpanDto[] };

export type ConflictKind =
  | "label_mismatch"
  | "span_boundary"
  | "span_label"
  | "span_presence";

export interface ConflictDto {
  conflict_id: string;
  doc_id: string;
  kind: ConflictKind;
  side_a: PayloadDto | null;
  side_b: PayloadDto | null;
}

export interface DocumentView {
  doc_id: string;
  text: string;
  text_b?: string;
  agreed: PayloadDto[];
  conflicts: ConflictDto[];
}

export type ChoiceDto = "a" | "b" | "none" | { custom: PayloadDto };

export interface ResolutionDto {
  conflict_id: string;
  choice: ChoiceDto;
}

export interface SessionState {
  iteration: number;
  schema: SchemaInfo;
  total_conflicts: number;
  resolved: number;
  pending: number;
  complete: boolean;
}

export interface ConflictBundle {
  iteration: number;
  documents: DocumentView[];
  resolutions: ResolutionDto[];
}

export interface RejectedRecord {
  conflict_id: string;
  code: string;
  message: string;
}

export interface SubmitOutcome {
  accepted: number;
  rejected: RejectedRecord[];
  resolved: number;
  total: number;
}

export interface DocumentDto {
  id: string;
  text: string;
  text_b?: string;
  meta?: Record<string, unknown>;
}
