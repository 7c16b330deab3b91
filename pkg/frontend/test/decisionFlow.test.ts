import assert from "node:assert/strict";
import { test } from "node:test";

import { DecisionFlow } from "../src/decisionFlow";
import { isValidLabel } from "../src/validation";

test("not-in-notes path skips the severity step", () => {
  const flow = new DecisionFlow("se-1");
  assert.equal(flow.answerInNotes(false), "done");
  const label = flow.result();
  assert.ok(label);
  assert.equal(label.category, "NOT_IN_NOTES");
  assert.equal(label.severity, "NONE");
});

test("no-error path skips severity", () => {
  const flow = new DecisionFlow("se-1");
  flow.answerInNotes(true);
  assert.equal(flow.answerCategory("NO_ERROR"), "done");
  assert.equal(flow.result()?.severity, "NONE");
});

test("incorrect then critical walks all three steps", () => {
  const flow = new DecisionFlow("se-1");
  assert.equal(flow.answerInNotes(true), "category");
  assert.equal(flow.answerCategory("INCORRECT"), "severity");
  assert.equal(flow.answerSeverity("CRITICAL"), "done");
  const label = flow.result();
  assert.deepEqual(label, { se_id: "se-1", category: "INCORRECT", severity: "CRITICAL" });
});

test("cancel mid-flow emits no label", () => {
  const flow = new DecisionFlow("se-1");
  flow.answerInNotes(true);
  flow.cancel();
  assert.equal(flow.result(), null);
});

test("result is null before completion", () => {
  const flow = new DecisionFlow("se-1");
  flow.answerInNotes(true);
  assert.equal(flow.result(), null);
});

test("steps cannot run out of order", () => {
  const flow = new DecisionFlow("se-1");
  assert.throws(() => flow.answerSeverity("MINOR"));
});

test("every completed path satisfies the shared validation rule", () => {
  const paths: Array<(flow: DecisionFlow) => void> = [
    (f) => f.answerInNotes(false),
    (f) => {
      f.answerInNotes(true);
      f.answerCategory("NO_ERROR");
    },
    (f) => {
      f.answerInNotes(true);
      f.answerCategory("INCORRECT");
      f.answerSeverity("MINOR");
    },
    (f) => {
      f.answerInNotes(true);
      f.answerCategory("MISSING");
      f.answerSeverity("CRITICAL");
    },
  ];
  for (const walk of paths) {
    const flow = new DecisionFlow("se-9");
    walk(flow);
    const label = flow.result();
    assert.ok(label && isValidLabel(label));
  }
});
