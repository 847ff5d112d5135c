/** Page bootstrap: wires the selectors, TF editor, and compare panel to
 * the DOM. Served by the tfopt service next to its /api routes. */

import { ApiClient } from "./api.js";
import { ComparePanel, type ComparePanelState } from "./compare_panel.js";
import { TFEditor } from "./tf_editor.js";
import { deriveTf, flatState, fromTf } from "./tf_model.js";
import type { CameraSpec } from "./types.js";

const EDITED_TF = "edited";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function fillSelect(select: HTMLSelectElement, names: string[]): void {
  select.innerHTML = "";
  for (const name of names) {
    const opt = document.createElement("option");
    opt.value = name;
    opt.textContent = name;
    select.appendChild(opt);
  }
}

function showImage(img: HTMLImageElement, bytes: Uint8Array | null): void {
  if (bytes === null) {
    img.removeAttribute("src");
    return;
  }
  const old = img.dataset.url;
  const url = URL.createObjectURL(new Blob([bytes.slice()], { type: "image/png" }));
  img.src = url;
  img.dataset.url = url;
  if (old) URL.revokeObjectURL(old);
}

function fmt(v: number | null): string {
  if (v === null) return "inf";
  return v.toPrecision(5);
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  const banner = el<HTMLDivElement>("error-banner");
  const setError = (message: string | null) => {
    banner.textContent = message ?? "";
    banner.style.display = message ? "block" : "none";
  };

  const refSelect = el<HTMLSelectElement>("ref-volume");
  const optSelect = el<HTMLSelectElement>("opt-volume");
  const tfSelect = el<HTMLSelectElement>("ref-tf");
  const solverSelect = el<HTMLSelectElement>("solver");
  const runButton = el<HTMLButtonElement>("run");
  const status = el<HTMLSpanElement>("status");
  const metricsOut = el<HTMLSpanElement>("metrics");

  const listing = await api.listVolumes();
  const volumeNames = listing.volumes
    .filter((v) => v.kind === "volume")
    .map((v) => v.name);
  fillSelect(refSelect, volumeNames);
  fillSelect(optSelect, volumeNames);
  if (volumeNames.length > 1) optSelect.selectedIndex = 1;

  // No TF listing route exists, so probe likely names; the editor's own
  // slot is always offered and starts flat when nothing else loads.
  const tfNames: string[] = [];
  for (const name of ["gray_ramp", "blue_red", "reference", ...volumeNames]) {
    try {
      await api.getTf(name);
      if (!tfNames.includes(name)) tfNames.push(name);
    } catch {
      // not a TF on this server; skip
    }
  }
  const editorState =
    tfNames.length > 0
      ? fromTf(await api.getTf(tfNames[0]!))
      : flatState(8, 0.5);
  if (!tfNames.includes(EDITED_TF)) {
    await api.putTf(EDITED_TF, deriveTf(editorState));
    tfNames.push(EDITED_TF);
  }
  fillSelect(tfSelect, tfNames);

  const editor = new TFEditor(
    el<HTMLCanvasElement>("tf-canvas"),
    api,
    editorState,
    {
      tfName: EDITED_TF,
      onError: setError,
      onSaved: () => setError(null),
    },
  );
  void editor.loadHistogram(refSelect.value);
  refSelect.addEventListener("change", () => void editor.loadHistogram(refSelect.value));
  tfSelect.addEventListener("change", () => {
    void api
      .getTf(tfSelect.value)
      .then((doc) => editor.setState(fromTf(doc)))
      .catch((err) => setError(err instanceof Error ? err.message : String(err)));
  });

  const views = {
    reference: el<HTMLImageElement>("view-reference"),
    original: el<HTMLImageElement>("view-original"),
    optimized: el<HTMLImageElement>("view-optimized"),
    residual: el<HTMLImageElement>("view-residual"),
  };

  const onPanelChange = (s: ComparePanelState) => {
    setError(s.error);
    status.textContent = s.busy ? `running ${(s.progress * 100).toFixed(0)}%` : "idle";
    runButton.disabled = s.busy;
    showImage(views.reference, s.images.reference);
    showImage(views.original, s.images.original);
    showImage(views.optimized, s.images.optimized);
    showImage(views.residual, s.images.residual);
    metricsOut.textContent = s.metrics
      ? `rmse ${fmt(s.metrics.rmse)}  psnr ${fmt(s.metrics.psnr)}  ssim ${fmt(s.metrics.ssim)}`
      : "";
  };

  const panel = new ComparePanel(
    api,
    {
      refVolume: refSelect.value,
      refTf: tfSelect.value,
      optVolume: optSelect.value,
      solver: solverSelect.value,
    },
    onPanelChange,
  );

  for (const [select, key] of [
    [refSelect, "refVolume"],
    [optSelect, "optVolume"],
    [tfSelect, "refTf"],
    [solverSelect, "solver"],
  ] as const) {
    select.addEventListener("change", () => panel.select({ [key]: select.value }));
  }

  runButton.addEventListener("click", () => {
    void editor.flush().then(() => panel.runCompare());
  });

  // Orbit drag on any view updates the one shared camera.
  let drag: { x: number; y: number; camera: CameraSpec } | null = null;
  for (const img of Object.values(views)) {
    img.addEventListener("pointerdown", (e) => {
      drag = { x: e.clientX, y: e.clientY, camera: { ...panel.state.camera } };
      img.setPointerCapture(e.pointerId);
    });
    img.addEventListener("pointermove", (e) => {
      if (!drag) return;
      const camera: CameraSpec = {
        ...drag.camera,
        azimuth: (drag.camera.azimuth ?? 45) + (e.clientX - drag.x) * 0.5,
        elevation: Math.min(
          89,
          Math.max(-89, (drag.camera.elevation ?? 30) + (e.clientY - drag.y) * 0.5),
        ),
      };
      void panel.setCamera(camera);
    });
    img.addEventListener("pointerup", () => {
      drag = null;
    });
  }
}

void boot().catch((err) => {
  const banner = document.getElementById("error-banner");
  if (banner) {
    banner.textContent = err instanceof Error ? err.message : String(err);
    (banner as HTMLElement).style.display = "block";
  }
});
