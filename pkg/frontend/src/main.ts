/** Browser wiring: one canvas, the control rail, and the request gate.
 * All pixels come from the service; this file only routes interactions.
 */

import { ApiClient } from "./api.js";
import { pixelBudget } from "./convert.js";
import { frameChecksum } from "./render.js";
import { renderState, replayLog, serializeLog, parseLog } from "./replay.js";
import { RequestGate } from "./scheduler.js";
import { applyEvent, defaultState } from "./state.js";
import type { Frame, InteractionEvent, ModelInfo, Mode, ViewState } from "./types.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

function toast(msg: string, ok = false): void {
  const el = $("toast");
  el.textContent = msg;
  el.className = ok ? "toast show ok" : "toast show";
  setTimeout(() => (el.className = "toast"), 2600);
}

async function boot(): Promise<void> {
  const api = new ApiClient("");
  let model: ModelInfo;
  try {
    model = await api.model();
  } catch (err) {
    toast(String(err));
    return;
  }
  const [H, W] = model.resolution;
  $("model-line").textContent =
    `${H}×${W} ${model.config.kind} · ${model.config.n_blocks} blocks · ` +
    `${model.counts.total.toLocaleString()} params · ${model.config_hash.slice(0, 10)}`;

  const canvas = $("view") as unknown as HTMLCanvasElement;
  const ctx = canvas.getContext("2d")!;
  const gate = new RequestGate(30);

  let state: ViewState = defaultState();
  let lastFrame: Frame | null = null;
  const allEvents: InteractionEvent[] = [];
  let recordedCount = 0;
  const recorded: InteractionEvent[] = [];

  function blit(frame: Frame): void {
    lastFrame = frame;
    canvas.width = frame.width;
    canvas.height = frame.height;
    const bytes = new Uint8ClampedArray(frame.rgba);
    ctx.putImageData(new ImageData(bytes, frame.width, frame.height), 0, 0);
    const total = H * W;
    const pct = ((100 * frame.nSynthesized) / total).toFixed(1);
    $("badge").textContent =
      `${frame.nSynthesized} / ${total} px synthesized (${pct}%)` +
      (state.mode === "foveated"
        ? ` · budget ${pixelBudget(state.fraction, H, W)}`
        : "");
  }

  function dispatch(ev: InteractionEvent): void {
    state = applyEvent(state, ev);
    allEvents.push(ev);
    const snapshot = state;
    const upto = allEvents.length;
    state.pendingRequest = true;
    gate.submit({
      exec: () => renderState(api, model, snapshot),
      apply: (frame) => {
        state.pendingRequest = false;
        blit(frame);
        for (; recordedCount < upto; recordedCount++) {
          recorded.push(allEvents[recordedCount]);
        }
      },
      onError: (err) => {
        state.pendingRequest = false;
        toast(String(err));
      },
    });
  }

  // --- controls ----------------------------------------------------------
  const modeSel = $("mode") as unknown as HTMLSelectElement;
  modeSel.onchange = () => {
    document.body.dataset.mode = modeSel.value;
    dispatch({ kind: "mode", value: modeSel.value as Mode });
  };
  const seedA = $("seed-a") as unknown as HTMLInputElement;
  seedA.onchange = () => dispatch({ kind: "seed-a", value: Number(seedA.value) });
  const seedB = $("seed-b") as unknown as HTMLInputElement;
  seedB.onchange = () => dispatch({ kind: "seed-b", value: Number(seedB.value) });

  const fraction = $("fraction") as unknown as HTMLInputElement;
  fraction.oninput = () => {
    $("fraction-label").textContent = `${fraction.value}%`;
    dispatch({ kind: "fraction", value: Number(fraction.value) / 100 });
  };
  const alpha = $("alpha") as unknown as HTMLInputElement;
  alpha.oninput = () => dispatch({ kind: "alpha", value: Number(alpha.value) / 100 });

  const mixLo = $("mix-lo") as unknown as HTMLInputElement;
  const mixHi = $("mix-hi") as unknown as HTMLInputElement;
  for (const el of [mixLo, mixHi]) {
    el.max = String(model.config.n_blocks);
    el.onchange = () => {
      const lo = Number(mixLo.value);
      const hi = Number(mixHi.value);
      if (lo > hi) return; // invalid range stays disabled
      dispatch({ kind: "mix-range", lo, hi });
    };
  }
  const blendSel = $("blend-mode") as unknown as HTMLSelectElement;
  blendSel.onchange = () =>
    dispatch({ kind: "blend-mode", value: blendSel.value as never });

  const pan = $("pan-x0") as unknown as HTMLInputElement;
  pan.max = String(W - 1);
  pan.oninput = () => dispatch({ kind: "pan-x0", value: Number(pan.value) });

  canvas.addEventListener("pointermove", (e) => {
    if (state.mode !== "foveated") return;
    const rect = canvas.getBoundingClientRect();
    const x = ((e.clientX - rect.left) / rect.width) * W;
    const y = ((e.clientY - rect.top) / rect.height) * H;
    dispatch({ kind: "gaze", x, y });
  });

  // --- interaction log ----------------------------------------------------
  $("export-log").onclick = () => {
    const blob = new Blob([serializeLog(recorded)], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "cips-session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  };
  $("replay-log").onclick = async () => {
    if (!lastFrame) return;
    const before = frameChecksum(lastFrame);
    try {
      const result = await replayLog(api, model, recorded);
      blit(result.frame);
      state = { ...result.state, pendingRequest: false, lastSparse: null };
      toast(
        result.checksum === before
          ? `replay ok: checksum ${result.checksum} (${result.requests} requests)`
          : `replay mismatch: ${result.checksum} != ${before}`,
        result.checksum === before,
      );
    } catch (err) {
      toast(String(err));
    }
  };
  const importInput = $("import-log") as unknown as HTMLInputElement;
  importInput.onchange = async () => {
    const file = importInput.files?.[0];
    if (!file) return;
    try {
      const events = parseLog(await file.text());
      const result = await replayLog(api, model, events);
      blit(result.frame);
      state = { ...result.state, pendingRequest: false, lastSparse: null };
      toast(`imported log: checksum ${result.checksum}`, true);
    } catch (err) {
      toast(String(err));
    }
  };

  document.body.dataset.mode = state.mode;
  dispatch({ kind: "mode", value: state.mode }); // initial canvas
}

boot();
