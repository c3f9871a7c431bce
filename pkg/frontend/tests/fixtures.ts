import type { ConflictBundle, SchemaInfo } from "../src/types.js";

export const CLASS_SCHEMA: SchemaInfo = {
  task_kind: "doc_class",
  classes: ["POS", "NEG", "NEU"],
};

export const SPAN_SCHEMA: SchemaInfo = {
  task_kind: "span_label",
  classes: ["ENT", "LOC"],
};

export const SCORE_SCHEMA: SchemaInfo = {
  task_kind: "pair_regress",
  range_lo: 0,
  range_hi: 5,
};

export function classBundle(): ConflictBundle {
  return {
    iteration: 1,
    documents: [
      {
        doc_id: "d1",
        text: "first clip under review",
        agreed: [],
        conflicts: [
          {
            conflict_id: "c1",
            doc_id: "d1",
            kind: "label_mismatch",
            side_a: { kind: "class", value: "POS" },
            side_b: { kind: "class", value: "NEG" },
          },
        ],
      },
      {
        doc_id: "d2",
        text: "second clip under review",
        agreed: [],
        conflicts: [
          {
            conflict_id: "c2",
            doc_id: "d2",
            kind: "label_mismatch",
            side_a: { kind: "class", value: "POS" },
            side_b: { kind: "class", value: "NEU" },
          },
        ],
      },
    ],
    resolutions: [],
  };
}

// "alpha bravo charlie delta echo foxtrot golf": charlie is 12..19,
// delta ends at 25, foxtrot is 31..38, total length 43.
export const SPAN_TEXT = "alpha bravo charlie delta echo foxtrot golf";

export function spanBundle(): ConflictBundle {
  return {
    iteration: 1,
    documents: [
      {
        doc_id: "s1",
        text: SPAN_TEXT,
        agreed: [{ kind: "spans", spans: [{ start: 0, end: 5, label: "ENT" }] }],
        conflicts: [
          {
            conflict_id: "cb1",
            doc_id: "s1",
            kind: "span_boundary",
            side_a: { kind: "spans", spans: [{ start: 12, end: 19, label: "ENT" }] },
            side_b: { kind: "spans", spans: [{ start: 12, end: 25, label: "ENT" }] },
          },
          {
            conflict_id: "cb2",
            doc_id: "s1",
            kind: "span_presence",
            side_a: { kind: "spans", spans: [{ start: 31, end: 38, label: "LOC" }] },
            side_b: null,
          },
        ],
      },
    ],
    resolutions: [],
  };
}

export function scoreBundle(): ConflictBundle {
  return {
    iteration: 1,
    documents: [
      {
        doc_id: "p1",
        text: "left side of the pair",
        text_b: "right side of the pair",
        agreed: [],
        conflicts: [
          {
            conflict_id: "sc1",
            doc_id: "p1",
            kind: "label_mismatch",
            side_a: { kind: "score", value: 1 },
            side_b: { kind: "score", value: 3 },
          },
        ],
      },
    ],
    resolutions: [],
  };
}
