/** Control-point model behind the TF editor.
 *
 * The editor works on a sparse curve: opacity control points and color
 * stops on [0, 1]. The dense n_T-entry table the service consumes is
 * derived by sampling both curves piecewise-linearly at bin centers
 * (k + 0.5) / n_T. Positions are strictly increasing with the first
 * point pinned to 0 and the last to 1, so the curve always covers the
 * whole scalar range. States are immutable; every edit returns a new
 * state with the dirty flag set.
 */

import type { TfDoc, TfEntry } from "./types.js";

export type Rgb = [number, number, number];

export interface OpacityPoint {
  position: number;
  alpha: number;
}

export interface ColorStop {
  position: number;
  rgb: Rgb;
}

export interface TFEditorState {
  readonly bins: number;
  readonly opacity: readonly OpacityPoint[];
  readonly colors: readonly ColorStop[];
  readonly dirty: boolean;
}

/** Closest two points may sit; keeps positions strictly increasing. */
export const MIN_GAP = 1e-3;

export class InvalidGestureError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "InvalidGestureError";
  }
}

export type Gesture =
  | { kind: "add_opacity"; position: number; alpha: number }
  | { kind: "move_opacity"; index: number; position: number; alpha: number }
  | { kind: "delete_opacity"; index: number }
  | { kind: "add_color"; position: number; rgb: Rgb }
  | { kind: "move_color"; index: number; position: number }
  | { kind: "set_color"; index: number; rgb: Rgb }
  | { kind: "delete_color"; index: number };

const clamp01 = (v: number) => Math.min(1, Math.max(0, v));

function clampRgb(rgb: Rgb): Rgb {
  return [clamp01(rgb[0]), clamp01(rgb[1]), clamp01(rgb[2])];
}

/** Flat curve: endpoints only, constant alpha and color. */
export function flatState(bins: number, alpha = 0.0, rgb: Rgb = [1, 1, 1]): TFEditorState {
  if (!Number.isInteger(bins) || bins < 2) {
    throw new RangeError(`bins must be an integer >= 2, got ${bins}`);
  }
  return {
    bins,
    opacity: [
      { position: 0, alpha: clamp01(alpha) },
      { position: 1, alpha: clamp01(alpha) },
    ],
    colors: [
      { position: 0, rgb: clampRgb(rgb) },
      { position: 1, rgb: clampRgb(rgb) },
    ],
    dirty: false,
  };
}

/**
 * Import a dense table as one control point per bin center plus pinned
 * endpoints holding the first/last entry. Evaluating at bin centers then
 * returns the original entries exactly: each center hits its own knot.
 */
export function fromTf(doc: TfDoc): TFEditorState {
  const entries = doc.entries;
  const n = entries.length;
  if (n < 2) throw new RangeError("TF must have at least 2 entries");
  const center = (k: number) => (k + 0.5) / n;

  const first = entries[0]!;
  const last = entries[n - 1]!;
  const opacity: OpacityPoint[] = [{ position: 0, alpha: first[3] }];
  const colors: ColorStop[] = [{ position: 0, rgb: [first[0], first[1], first[2]] }];
  for (let k = 0; k < n; k++) {
    const e = entries[k]!;
    opacity.push({ position: center(k), alpha: e[3] });
    colors.push({ position: center(k), rgb: [e[0], e[1], e[2]] });
  }
  opacity.push({ position: 1, alpha: last[3] });
  colors.push({ position: 1, rgb: [last[0], last[1], last[2]] });
  return { bins: n, opacity, colors, dirty: false };
}

/** Piecewise-linear evaluation; exact at knots. */
function evalCurve<P extends { position: number }>(
  points: readonly P[],
  value: (p: P) => number,
  pos: number,
): number {
  const first = points[0]!;
  const lastPt = points[points.length - 1]!;
  if (pos <= first.position) return value(first);
  if (pos >= lastPt.position) return value(lastPt);
  let i = 0;
  while (points[i + 1]!.position < pos) i++;
  const a = points[i]!;
  const b = points[i + 1]!;
  if (pos === a.position) return value(a);
  if (pos === b.position) return value(b);
  const t = (pos - a.position) / (b.position - a.position);
  return value(a) + t * (value(b) - value(a));
}

export function sampleOpacity(state: TFEditorState, pos: number): number {
  return evalCurve(state.opacity, (p) => p.alpha, pos);
}

export function sampleColor(state: TFEditorState, pos: number): Rgb {
  return [
    evalCurve(state.colors, (p) => p.rgb[0], pos),
    evalCurve(state.colors, (p) => p.rgb[1], pos),
    evalCurve(state.colors, (p) => p.rgb[2], pos),
  ];
}

/** Dense table consumed by the service: curves sampled at bin centers. */
export function deriveTf(state: TFEditorState): TfEntry[] {
  const out: TfEntry[] = [];
  for (let k = 0; k < state.bins; k++) {
    const pos = (k + 0.5) / state.bins;
    const [r, g, b] = sampleColor(state, pos);
    out.push([r, g, b, sampleOpacity(state, pos)]);
  }
  return out;
}

export function toTfDoc(state: TFEditorState, name?: string): TfDoc {
  const entries = deriveTf(state);
  const doc: TfDoc = { n_t: entries.length, entries };
  if (name !== undefined) doc.name = name;
  return doc;
}

export function markClean(state: TFEditorState): TFEditorState {
  return { ...state, dirty: false };
}

/** Throws if positions are not strictly increasing from 0 to 1. */
export function checkInvariants(state: TFEditorState): void {
  for (const points of [state.opacity, state.colors] as const) {
    if (points.length < 2) throw new Error("curve needs at least 2 points");
    if (points[0]!.position !== 0) throw new Error("first point must sit at 0");
    if (points[points.length - 1]!.position !== 1) {
      throw new Error("last point must sit at 1");
    }
    for (let i = 1; i < points.length; i++) {
      if (!(points[i]!.position > points[i - 1]!.position)) {
        throw new Error("positions must be strictly increasing");
      }
    }
  }
}

function insertSorted<P extends { position: number }>(
  points: readonly P[],
  make: (position: number) => P,
  position: number,
): P[] {
  // Clamp into the gap between the would-be neighbors.
  let i = 1;
  while (i < points.length && points[i]!.position < position) i++;
  const lo = points[i - 1]!.position + MIN_GAP;
  const hi = points[Math.min(i, points.length - 1)]!.position - MIN_GAP;
  if (lo > hi) throw new InvalidGestureError("no room for a new point here");
  const clamped = Math.min(hi, Math.max(lo, position));
  const out = points.slice();
  out.splice(i, 0, make(clamped));
  return out;
}

function movedPosition<P extends { position: number }>(
  points: readonly P[],
  index: number,
  position: number,
): number {
  if (index === 0) return 0;
  if (index === points.length - 1) return 1;
  // Interior points stop a minimum gap short of either neighbor.
  const lo = points[index - 1]!.position + MIN_GAP;
  const hi = points[index + 1]!.position - MIN_GAP;
  return Math.min(hi, Math.max(lo, position));
}

function requireIndex(length: number, index: number, what: string): void {
  if (!Number.isInteger(index) || index < 0 || index >= length) {
    throw new InvalidGestureError(`no ${what} at index ${index}`);
  }
}

export function addOpacityPoint(
  state: TFEditorState,
  position: number,
  alpha: number,
): TFEditorState {
  const opacity = insertSorted(
    state.opacity,
    (p) => ({ position: p, alpha: clamp01(alpha) }),
    position,
  );
  return { ...state, opacity, dirty: true };
}

export function moveOpacityPoint(
  state: TFEditorState,
  index: number,
  position: number,
  alpha: number,
): TFEditorState {
  requireIndex(state.opacity.length, index, "opacity point");
  const opacity = state.opacity.slice();
  opacity[index] = {
    position: movedPosition(state.opacity, index, position),
    alpha: clamp01(alpha),
  };
  return { ...state, opacity, dirty: true };
}

export function deleteOpacityPoint(state: TFEditorState, index: number): TFEditorState {
  requireIndex(state.opacity.length, index, "opacity point");
  if (index === 0 || index === state.opacity.length - 1) {
    throw new InvalidGestureError("endpoints cannot be deleted");
  }
  const opacity = state.opacity.slice();
  opacity.splice(index, 1);
  return { ...state, opacity, dirty: true };
}

export function addColorStop(
  state: TFEditorState,
  position: number,
  rgb: Rgb,
): TFEditorState {
  const colors = insertSorted(
    state.colors,
    (p) => ({ position: p, rgb: clampRgb(rgb) }),
    position,
  );
  return { ...state, colors, dirty: true };
}

export function moveColorStop(
  state: TFEditorState,
  index: number,
  position: number,
): TFEditorState {
  requireIndex(state.colors.length, index, "color stop");
  const colors = state.colors.slice();
  colors[index] = {
    position: movedPosition(state.colors, index, position),
    rgb: state.colors[index]!.rgb,
  };
  return { ...state, colors, dirty: true };
}

export function setColorStop(state: TFEditorState, index: number, rgb: Rgb): TFEditorState {
  requireIndex(state.colors.length, index, "color stop");
  const colors = state.colors.slice();
  colors[index] = { position: state.colors[index]!.position, rgb: clampRgb(rgb) };
  return { ...state, colors, dirty: true };
}

export function deleteColorStop(state: TFEditorState, index: number): TFEditorState {
  requireIndex(state.colors.length, index, "color stop");
  if (index === 0 || index === state.colors.length - 1) {
    throw new InvalidGestureError("endpoints cannot be deleted");
  }
  const colors = state.colors.slice();
  colors.splice(index, 1);
  return { ...state, colors, dirty: true };
}

/** Single entry point the widget dispatches pointer gestures through. */
export function editTf(state: TFEditorState, gesture: Gesture): TFEditorState {
  switch (gesture.kind) {
    case "add_opacity":
      return addOpacityPoint(state, gesture.position, gesture.alpha);
    case "move_opacity":
      return moveOpacityPoint(state, gesture.index, gesture.position, gesture.alpha);
    case "delete_opacity":
      return deleteOpacityPoint(state, gesture.index);
    case "add_color":
      return addColorStop(state, gesture.position, gesture.rgb);
    case "move_color":
      return moveColorStop(state, gesture.index, gesture.position);
    case "set_color":
      return setColorStop(state, gesture.index, gesture.rgb);
    case "delete_color":
      return deleteColorStop(state, gesture.index);
  }
}
