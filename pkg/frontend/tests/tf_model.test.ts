import { describe, expect, it } from "vitest";

import {
  InvalidGestureError,
  MIN_GAP,
  addColorStop,
  addOpacityPoint,
  checkInvariants,
  deleteColorStop,
  deleteOpacityPoint,
  deriveTf,
  editTf,
  flatState,
  fromTf,
  markClean,
  moveColorStop,
  moveOpacityPoint,
  sampleColor,
  sampleOpacity,
  setColorStop,
  toTfDoc,
} from "../src/tf_model.js";
import type { TfEntry } from "../src/types.js";

describe("flatState", () => {
  it("has endpoints only and derives a constant table", () => {
    const s = flatState(8, 0.5, [0.2, 0.4, 0.6]);
    checkInvariants(s);
    expect(s.opacity).toHaveLength(2);
    expect(s.colors).toHaveLength(2);
    expect(s.dirty).toBe(false);
    for (const row of deriveTf(s)) {
      expect(row).toEqual([0.2, 0.4, 0.6, 0.5]);
    }
  });

  it("rejects silly bin counts", () => {
    expect(() => flatState(1)).toThrow(RangeError);
    expect(() => flatState(2.5)).toThrow(RangeError);
  });
});

describe("adding an opacity point", () => {
  it("turns a flat-zero curve into a tent peaking mid-range", () => {
    const n = 8;
    let s = flatState(n, 0);
    s = addOpacityPoint(s, 0.5, 1.0);
    checkInvariants(s);
    const entries = deriveTf(s);

    // Piecewise-linear tent through (0,0), (0.5,1), (1,0) sampled at
    // bin centers: alpha(x) = 1 - |x - 0.5| / 0.5.
    for (let k = 0; k < n; k++) {
      const x = (k + 0.5) / n;
      expect(entries[k]![3]).toBeCloseTo(1 - Math.abs(x - 0.5) / 0.5, 12);
    }
    const alphas = entries.map((e) => e[3]);
    const peak = Math.max(...alphas);
    expect(peak).toBeCloseTo(1 - 1 / n, 12);
    // The two bins straddling the midpoint share the peak.
    expect(alphas[n / 2 - 1]).toBeCloseTo(peak, 12);
    expect(alphas[n / 2]).toBeCloseTo(peak, 12);
  });

  it("keeps positions strictly increasing when dropped onto a neighbor", () => {
    let s = flatState(8);
    s = addOpacityPoint(s, 0.5, 1);
    s = addOpacityPoint(s, 0.5, 0.7);
    checkInvariants(s);
    expect(s.opacity).toHaveLength(4);
  });

  it("refuses when there is no room", () => {
    let s = flatState(8);
    s = addOpacityPoint(s, MIN_GAP / 2, 1); // clamped just inside 0
    expect(s.opacity[1]!.position).toBeCloseTo(MIN_GAP, 12);
    expect(() => addOpacityPoint(s, MIN_GAP / 2, 1)).toThrow(InvalidGestureError);
  });

  it("marks the state dirty", () => {
    const s = addOpacityPoint(flatState(8), 0.3, 0.5);
    expect(s.dirty).toBe(true);
    expect(markClean(s).dirty).toBe(false);
  });
});

describe("moving an opacity point", () => {
  it("clamps an interior point a minimum gap short of its neighbors", () => {
    let s = flatState(8);
    s = addOpacityPoint(s, 0.3, 0.5);
    s = addOpacityPoint(s, 0.6, 0.8);
    // Drag the 0.3 point far past the 0.6 one.
    s = moveOpacityPoint(s, 1, 0.9, 0.5);
    expect(s.opacity[1]!.position).toBeCloseTo(0.6 - MIN_GAP, 12);
    // And back past the left endpoint.
    s = moveOpacityPoint(s, 1, -5, 0.5);
    expect(s.opacity[1]!.position).toBeCloseTo(MIN_GAP, 12);
    checkInvariants(s);
  });

  it("pins endpoint positions but lets their alpha move", () => {
    let s = flatState(8, 0.2);
    s = moveOpacityPoint(s, 0, 0.4, 0.9);
    s = moveOpacityPoint(s, s.opacity.length - 1, 0.1, 0.6);
    expect(s.opacity[0]!.position).toBe(0);
    expect(s.opacity[s.opacity.length - 1]!.position).toBe(1);
    expect(s.opacity[0]!.alpha).toBe(0.9);
    expect(s.opacity[s.opacity.length - 1]!.alpha).toBe(0.6);
    checkInvariants(s);
  });

  it("clamps alpha into [0, 1]", () => {
    let s = flatState(8);
    s = moveOpacityPoint(s, 0, 0, 7);
    expect(s.opacity[0]!.alpha).toBe(1);
    s = moveOpacityPoint(s, 0, 0, -7);
    expect(s.opacity[0]!.alpha).toBe(0);
  });

  it("rejects a bogus index", () => {
    expect(() => moveOpacityPoint(flatState(8), 5, 0.5, 0.5)).toThrow(
      InvalidGestureError,
    );
  });
});

describe("deleting points", () => {
  it("removes interior points", () => {
    let s = addOpacityPoint(flatState(8), 0.5, 1);
    s = deleteOpacityPoint(s, 1);
    expect(s.opacity).toHaveLength(2);
    checkInvariants(s);
  });

  it("rejects deleting either endpoint", () => {
    const s = flatState(8);
    expect(() => deleteOpacityPoint(s, 0)).toThrow(InvalidGestureError);
    expect(() => deleteOpacityPoint(s, 1)).toThrow(InvalidGestureError);
    expect(() => deleteColorStop(s, 0)).toThrow(InvalidGestureError);
    expect(() => deleteColorStop(s, 1)).toThrow(InvalidGestureError);
  });
});

describe("color stops", () => {
  it("interpolates linearly between stops", () => {
    let s = flatState(4, 0.5, [0, 0, 0]);
    s = setColorStop(s, 1, [1, 0.5, 0]);
    // Stops: (0, black) .. (1, orange); midpoint is the mean.
    expect(sampleColor(s, 0.5)).toEqual([0.5, 0.25, 0]);
    const entries = deriveTf(s);
    expect(entries[0]!.slice(0, 3)).toEqual([0.125, 0.0625, 0]);
  });

  it("supports add and move with the same clamping as opacity", () => {
    let s = flatState(4);
    s = addColorStop(s, 0.5, [1, 0, 0]);
    s = moveColorStop(s, 1, 2);
    expect(s.colors[1]!.position).toBeCloseTo(1 - MIN_GAP, 12);
    checkInvariants(s);
  });

  it("clamps color components into [0, 1]", () => {
    const s = setColorStop(flatState(4), 0, [2, -1, 0.5]);
    expect(s.colors[0]!.rgb).toEqual([1, 0, 0.5]);
  });
});

describe("importing a dense table", () => {
  const randomEntries = (n: number, seed: number): TfEntry[] => {
    // Tiny LCG; enough to fill tables deterministically.
    let x = seed >>> 0;
    const next = () => {
      x = (1664525 * x + 1013904223) >>> 0;
      return x / 2 ** 32;
    };
    return Array.from({ length: n }, () => [next(), next(), next(), next()]);
  };

  it("derives back the original entries exactly", () => {
    for (const n of [2, 5, 8, 33]) {
      const entries = randomEntries(n, n);
      const s = fromTf({ n_t: n, entries });
      checkInvariants(s);
      expect(deriveTf(s)).toEqual(entries);
    }
  });

  it("extends the outermost entries flat to the range ends", () => {
    const entries: TfEntry[] = [
      [0.1, 0.2, 0.3, 0.4],
      [0.5, 0.6, 0.7, 0.8],
    ];
    const s = fromTf({ n_t: 2, entries });
    expect(sampleOpacity(s, 0)).toBe(0.4);
    expect(sampleOpacity(s, 1)).toBe(0.8);
    expect(sampleColor(s, 0)).toEqual([0.1, 0.2, 0.3]);
  });

  it("rejects tables with fewer than two entries", () => {
    expect(() => fromTf({ n_t: 1, entries: [[0, 0, 0, 0]] })).toThrow(RangeError);
  });
});

describe("document round-trip", () => {
  it("serializes bins and entries", () => {
    const s = addOpacityPoint(flatState(4, 0.25), 0.5, 1);
    const doc = toTfDoc(s, "edited");
    expect(doc.name).toBe("edited");
    expect(doc.n_t).toBe(4);
    expect(doc.entries).toHaveLength(4);
    // Re-importing the serialized doc derives the same table.
    expect(deriveTf(fromTf(doc))).toEqual(doc.entries);
  });
});

describe("gesture dispatch", () => {
  it("routes every gesture kind", () => {
    let s = flatState(8);
    s = editTf(s, { kind: "add_opacity", position: 0.5, alpha: 1 });
    s = editTf(s, { kind: "move_opacity", index: 1, position: 0.4, alpha: 0.9 });
    s = editTf(s, { kind: "add_color", position: 0.5, rgb: [1, 0, 0] });
    s = editTf(s, { kind: "move_color", index: 1, position: 0.6 });
    s = editTf(s, { kind: "set_color", index: 1, rgb: [0, 1, 0] });
    checkInvariants(s);
    expect(s.opacity).toHaveLength(3);
    expect(s.colors).toHaveLength(3);
    expect(s.colors[1]!.rgb).toEqual([0, 1, 0]);
    s = editTf(s, { kind: "delete_color", index: 1 });
    s = editTf(s, { kind: "delete_opacity", index: 1 });
    expect(s.opacity).toHaveLength(2);
    expect(s.colors).toHaveLength(2);
  });

  it("propagates invalid-target errors", () => {
    expect(() => editTf(flatState(8), { kind: "delete_opacity", index: 0 })).toThrow(
      InvalidGestureError,
    );
  });
});
