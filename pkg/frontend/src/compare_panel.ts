/** Solver comparison panel: one optimization run feeding four linked
 * views (reference, un-optimized, optimized, residual) plus image
 * metrics, all rendered server side under one shared camera.
 */

import type {
  CameraSpec,
  MetricReportDoc,
  SolveReportDoc,
} from "./types.js";
import type { Api } from "./api.js";
import { pollJob, type PollOptions } from "./poll.js";
import { RequestSequencer } from "./seq.js";

export interface PanelImages {
  /** Reference volume under the reference TF. */
  reference: Uint8Array | null;
  /** Optimization volume under the reference TF (the "before" view). */
  original: Uint8Array | null;
  /** Optimization volume under the optimized TF. */
  optimized: Uint8Array | null;
  /** Voxel-space residual volume, self-colored. */
  residual: Uint8Array | null;
}

export interface ComparePanelState {
  refVolume: string;
  refTf: string;
  optVolume: string;
  solver: string;
  params: Record<string, unknown>;
  seed: number;
  camera: CameraSpec;
  /** Server-side names of the last run's outputs, null before any run. */
  optimizedTf: string | null;
  residualVolume: string | null;
  images: PanelImages;
  metrics: MetricReportDoc | null;
  report: SolveReportDoc | null;
  maxResidual: number | null;
  /** Inline error banner text; null when the last action succeeded. */
  error: string | null;
  busy: boolean;
  progress: number;
}

export interface PanelSelection {
  refVolume: string;
  refTf: string;
  optVolume: string;
  solver?: string;
  params?: Record<string, unknown>;
  seed?: number;
  camera?: CameraSpec;
}

const DEFAULT_CAMERA: CameraSpec = {
  width: 256,
  height: 256,
  azimuth: 45,
  elevation: 30,
};

export function initialPanelState(sel: PanelSelection): ComparePanelState {
  return {
    refVolume: sel.refVolume,
    refTf: sel.refTf,
    optVolume: sel.optVolume,
    solver: sel.solver ?? "auto",
    params: sel.params ?? {},
    seed: sel.seed ?? 0,
    camera: sel.camera ?? { ...DEFAULT_CAMERA },
    optimizedTf: null,
    residualVolume: null,
    images: { reference: null, original: null, optimized: null, residual: null },
    metrics: null,
    report: null,
    maxResidual: null,
    error: null,
    busy: false,
    progress: 0,
  };
}

export class ComparePanel {
  private current: ComparePanelState;
  private readonly seq = new RequestSequencer();

  constructor(
    private readonly api: Api,
    selection: PanelSelection,
    private readonly onChange: (state: ComparePanelState) => void = () => {},
  ) {
    this.current = initialPanelState(selection);
  }

  get state(): ComparePanelState {
    return this.current;
  }

  private commit(patch: Partial<ComparePanelState>): void {
    this.current = { ...this.current, ...patch };
    this.onChange(this.current);
  }

  select(sel: Partial<PanelSelection>): void {
    this.commit(sel as Partial<ComparePanelState>);
  }

  /** All four views under one camera payload, fetched together. */
  private async renderAll(
    camera: CameraSpec,
    optimizedTf: string | null,
    residualVolume: string | null,
  ): Promise<PanelImages> {
    const s = this.current;
    const [reference, original, optimized, residual] = await Promise.all([
      this.api.render({ volume: s.refVolume, tf: s.refTf, camera }),
      this.api.render({ volume: s.optVolume, tf: s.refTf, camera }),
      optimizedTf === null
        ? Promise.resolve(null)
        : this.api.render({ volume: s.optVolume, tf: optimizedTf, camera }),
      residualVolume === null
        ? Promise.resolve(null)
        : this.api.render({ volume: residualVolume, camera }),
    ]);
    return { reference, original, optimized, residual };
  }

  /**
   * Run the selected solver, then refresh all views and metrics. On any
   * failure only the error banner changes; images, metrics, and previous
   * results stay on screen.
   */
  async runCompare(poll: PollOptions = {}): Promise<void> {
    const s = this.current;
    this.commit({ busy: true, error: null, progress: 0 });
    try {
      const jobId = await this.api.optimize({
        ref: s.refVolume,
        ref_tf: s.refTf,
        opt: s.optVolume,
        solver: s.solver,
        params: s.params,
        seed: s.seed,
        out_name: `${s.optVolume}_${s.solver}`,
      });
      const job = await pollJob(this.api, jobId, {
        ...poll,
        onProgress: (j) => {
          this.commit({ progress: j.progress });
          poll.onProgress?.(j);
        },
      });
      const optimizedTf = job.result!.tf;
      const residualOut = await this.api.residual({
        ref: s.refVolume,
        ref_tf: s.refTf,
        opt: s.optVolume,
        opt_tf: optimizedTf,
        out_name: `${s.optVolume}_residual`,
      });

      const ticket = this.seq.begin();
      const camera = this.current.camera;
      const images = await this.renderAll(camera, optimizedTf, residualOut.volume);
      const metrics =
        images.reference !== null && images.optimized !== null
          ? await this.api.metrics(images.reference, images.optimized)
          : null;
      if (!this.seq.isCurrent(ticket)) return;
      this.commit({
        optimizedTf,
        residualVolume: residualOut.volume,
        maxResidual: residualOut.max_residual,
        images,
        metrics,
        report: job.result!.report,
        busy: false,
        progress: 1,
      });
    } catch (err) {
      this.commit({ busy: false, error: errorText(err) });
    }
  }

  /**
   * Camera drags re-render the linked views without re-optimizing. Out
   * of several overlapping drags only the newest response set lands.
   */
  async setCamera(camera: CameraSpec): Promise<void> {
    this.commit({ camera });
    const ticket = this.seq.begin();
    try {
      const images = await this.renderAll(
        camera,
        this.current.optimizedTf,
        this.current.residualVolume,
      );
      if (!this.seq.isCurrent(ticket)) return;
      this.commit({ images });
    } catch (err) {
      if (!this.seq.isCurrent(ticket)) return;
      this.commit({ error: errorText(err) });
    }
  }
}

function errorText(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
