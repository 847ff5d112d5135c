/** Canvas widget for the TF editor.
 *
 * Opacity curve drawn on top of the scalar histogram, a color bar
 * underneath showing the interpolated color stops. Pointer gestures map
 * to model edits; the derived table is PUT to the server debounced so a
 * drag does not turn into a request per pixel.
 */

import type { Api } from "./api.js";
import type { HistogramDoc } from "./types.js";
import {
  deriveTf,
  editTf,
  markClean,
  sampleColor,
  type Gesture,
  type TFEditorState,
} from "./tf_model.js";
import { debounce, type Debounced } from "./util.js";

const POINT_RADIUS = 5;
const HIT_RADIUS = 9;
const COLOR_BAR_H = 18;
const PUT_DEBOUNCE_MS = 250;

export interface TFEditorOptions {
  /** Server name the edited TF is saved under. */
  tfName: string;
  onSaved?: (state: TFEditorState) => void;
  onError?: (message: string) => void;
  onEdit?: (state: TFEditorState) => void;
}

export class TFEditor {
  private state: TFEditorState;
  private histogram: HistogramDoc | null = null;
  private dragIndex: number | null = null;
  private readonly push: Debounced<[]>;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly api: Api,
    state: TFEditorState,
    private readonly opts: TFEditorOptions,
  ) {
    this.state = state;
    this.push = debounce(() => void this.save(), PUT_DEBOUNCE_MS);
    canvas.addEventListener("pointerdown", (e) => this.onPointerDown(e));
    canvas.addEventListener("pointermove", (e) => this.onPointerMove(e));
    canvas.addEventListener("pointerup", (e) => this.onPointerUp(e));
    canvas.addEventListener("dblclick", (e) => this.onDoubleClick(e));
    this.draw();
  }

  getState(): TFEditorState {
    return this.state;
  }

  setState(state: TFEditorState): void {
    this.state = state;
    this.draw();
  }

  async loadHistogram(volume: string, bins = 64): Promise<void> {
    try {
      this.histogram = await this.api.histogram(volume, bins);
    } catch (err) {
      this.opts.onError?.(err instanceof Error ? err.message : String(err));
      this.histogram = null;
    }
    this.draw();
  }

  private apply(gesture: Gesture): void {
    try {
      this.state = editTf(this.state, gesture);
    } catch (err) {
      this.opts.onError?.(err instanceof Error ? err.message : String(err));
      return;
    }
    this.opts.onEdit?.(this.state);
    this.draw();
    this.push();
  }

  private async save(): Promise<void> {
    try {
      await this.api.putTf(this.opts.tfName, deriveTf(this.state));
      this.state = markClean(this.state);
      this.opts.onSaved?.(this.state);
    } catch (err) {
      this.opts.onError?.(err instanceof Error ? err.message : String(err));
    }
  }

  /** Flush a pending debounced save (e.g. before running a solver). */
  async flush(): Promise<void> {
    this.push.cancel();
    if (this.state.dirty) await this.save();
  }

  // Geometry: curve area above the color bar, positions map to x.
  private curveHeight(): number {
    return this.canvas.height - COLOR_BAR_H;
  }

  private toModel(e: PointerEvent | MouseEvent): { pos: number; alpha: number } {
    const r = this.canvas.getBoundingClientRect();
    const x = ((e.clientX - r.left) / r.width) * this.canvas.width;
    const y = ((e.clientY - r.top) / r.height) * this.canvas.height;
    return {
      pos: Math.min(1, Math.max(0, x / this.canvas.width)),
      alpha: Math.min(1, Math.max(0, 1 - y / this.curveHeight())),
    };
  }

  private hitTest(e: PointerEvent | MouseEvent): number | null {
    const r = this.canvas.getBoundingClientRect();
    const x = ((e.clientX - r.left) / r.width) * this.canvas.width;
    const y = ((e.clientY - r.top) / r.height) * this.canvas.height;
    const h = this.curveHeight();
    for (let i = 0; i < this.state.opacity.length; i++) {
      const p = this.state.opacity[i]!;
      const px = p.position * this.canvas.width;
      const py = (1 - p.alpha) * h;
      if (Math.hypot(px - x, py - y) <= HIT_RADIUS) return i;
    }
    return null;
  }

  private onPointerDown(e: PointerEvent): void {
    const hit = this.hitTest(e);
    if (hit !== null) {
      this.dragIndex = hit;
      this.canvas.setPointerCapture(e.pointerId);
      return;
    }
    const { pos, alpha } = this.toModel(e);
    this.apply({ kind: "add_opacity", position: pos, alpha });
    this.dragIndex = this.hitTest(e);
    if (this.dragIndex !== null) this.canvas.setPointerCapture(e.pointerId);
  }

  private onPointerMove(e: PointerEvent): void {
    if (this.dragIndex === null) return;
    const { pos, alpha } = this.toModel(e);
    this.apply({ kind: "move_opacity", index: this.dragIndex, position: pos, alpha });
  }

  private onPointerUp(e: PointerEvent): void {
    if (this.dragIndex !== null) this.canvas.releasePointerCapture(e.pointerId);
    this.dragIndex = null;
  }

  private onDoubleClick(e: MouseEvent): void {
    const hit = this.hitTest(e);
    if (hit !== null) this.apply({ kind: "delete_opacity", index: hit });
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const w = this.canvas.width;
    const h = this.curveHeight();
    ctx.clearRect(0, 0, w, this.canvas.height);

    ctx.fillStyle = "#181818";
    ctx.fillRect(0, 0, w, h);

    if (this.histogram) {
      const counts = this.histogram.counts;
      const peak = Math.max(1, ...counts);
      ctx.fillStyle = "rgba(230, 200, 60, 0.55)";
      const bw = w / counts.length;
      for (let i = 0; i < counts.length; i++) {
        const bh = (counts[i]! / peak) * (h - 4);
        ctx.fillRect(i * bw, h - bh, Math.max(1, bw - 1), bh);
      }
    }

    // Color bar from the interpolated stops.
    for (let x = 0; x < w; x++) {
      const [r, g, b] = sampleColor(this.state, x / (w - 1));
      ctx.fillStyle = `rgb(${r * 255}, ${g * 255}, ${b * 255})`;
      ctx.fillRect(x, h, 1, COLOR_BAR_H);
    }

    ctx.strokeStyle = "#ffffff";
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    for (let i = 0; i < this.state.opacity.length; i++) {
      const p = this.state.opacity[i]!;
      const px = p.position * w;
      const py = (1 - p.alpha) * h;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    }
    ctx.stroke();

    for (const p of this.state.opacity) {
      ctx.beginPath();
      ctx.arc(p.position * w, (1 - p.alpha) * h, POINT_RADIUS, 0, 2 * Math.PI);
      ctx.fillStyle = this.state.dirty ? "#ffcf40" : "#ffffff";
      ctx.fill();
      ctx.strokeStyle = "#000000";
      ctx.stroke();
    }
  }
}
