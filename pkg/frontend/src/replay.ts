/** Interaction-log recording and deterministic replay.
 *
 * A log is the ordered list of applied interactions. Replaying folds them
 * into state, re-issues one synthesis per interaction against the same
 * checkpoint (sequentially, so ordering cannot race), and returns the
 * final frame; equal checksums mean equal canvases, byte for byte.
 */

import type { ApiClient } from "./api.js";
import { foveatedFrame, frameChecksum, rasterFrame } from "./render.js";
import { applyEvent, defaultState, lerpStyle, planRequest } from "./state.js";
import type { Frame, InteractionEvent, ModelInfo, ViewState } from "./types.js";

export async function renderState(
  api: ApiClient,
  model: ModelInfo,
  state: ViewState,
): Promise<Frame> {
  const plan = planRequest(state, model);
  if (plan.needsMap) {
    const [wA, wB] = await Promise.all([
      api.mapSeed(plan.needsMap.seedA),
      api.mapSeed(plan.needsMap.seedB),
    ]);
    plan.body.style = { w: lerpStyle(wA, wB, plan.needsMap.alpha) };
  }
  const resp = await api.synthesizeSparse(plan.body);
  return plan.raster
    ? rasterFrame(resp, plan.raster.H, plan.raster.W)
    : foveatedFrame(resp);
}

export interface ReplayResult {
  frame: Frame;
  checksum: string;
  state: ViewState;
  requests: number;
}

export async function replayLog(
  api: ApiClient,
  model: ModelInfo,
  events: InteractionEvent[],
): Promise<ReplayResult> {
  let state = defaultState();
  let frame = await renderState(api, model, state); // the initial canvas
  let requests = 1;
  for (const ev of events) {
    state = applyEvent(state, ev);
    frame = await renderState(api, model, state);
    requests += 1;
  }
  return { frame, checksum: frameChecksum(frame), state, requests };
}

export function serializeLog(events: InteractionEvent[]): string {
  return JSON.stringify({ version: 1, events }, null, 1);
}

export function parseLog(text: string): InteractionEvent[] {
  const obj = JSON.parse(text);
  if (!obj || obj.version !== 1 || !Array.isArray(obj.events)) {
    throw new Error("not a version-1 interaction log");
  }
  return obj.events as InteractionEvent[];
}
