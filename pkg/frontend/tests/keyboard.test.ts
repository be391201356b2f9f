import { describe, expect, it } from "vitest";
import { interpretKey } from "../src/keyboard";

const plain = { editable: false, modified: false };

describe("interpretKey", () => {
  it("maps v/n/u to verdict actions", () => {
    expect(interpretKey("v", plain)).toEqual({ type: "verdict", verdict: "visual" });
    expect(interpretKey("n", plain)).toEqual({ type: "verdict", verdict: "nonvisual" });
    expect(interpretKey("u", plain)).toEqual({ type: "verdict", verdict: "unlabeled" });
  });

  it("maps j/k and the arrow keys to movement", () => {
    expect(interpretKey("j", plain)).toEqual({ type: "move", delta: 1 });
    expect(interpretKey("ArrowDown", plain)).toEqual({ type: "move", delta: 1 });
    expect(interpretKey("k", plain)).toEqual({ type: "move", delta: -1 });
    expect(interpretKey("ArrowUp", plain)).toEqual({ type: "move", delta: -1 });
  });

  it("maps r, g, slash, and Escape to board actions", () => {
    expect(interpretKey("r", plain)).toEqual({ type: "recompute" });
    expect(interpretKey("g", plain)).toEqual({ type: "refresh" });
    expect(interpretKey("/", plain)).toEqual({ type: "focus-search" });
    expect(interpretKey("Escape", plain)).toEqual({ type: "dismiss" });
  });

  it("ignores shortcut keys while typing in an editable element", () => {
    const editing = { editable: true, modified: false };
    expect(interpretKey("v", editing)).toBeNull();
    expect(interpretKey("j", editing)).toBeNull();
    expect(interpretKey("/", editing)).toBeNull();
    expect(interpretKey("Escape", editing)).toEqual({ type: "dismiss" });
  });

  it("ignores chords with modifier keys held", () => {
    expect(interpretKey("v", { editable: false, modified: true })).toBeNull();
    expect(interpretKey("r", { editable: false, modified: true })).toBeNull();
  });

  it("ignores unbound keys", () => {
    expect(interpretKey("x", plain)).toBeNull();
    expect(interpretKey("Enter", plain)).toBeNull();
  });
});
