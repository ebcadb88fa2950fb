/** View state: committed server frames plus optimistic ghost previews.
 *
 * Invariants:
 *  - `frameIndex` always equals the last acknowledged server frame_index;
 *  - pending actions only ever affect the ghost layer, never committed state.
 */
import type { ActionDoc, Observation } from "./protocol.js";

export type InputMode = "drag-tip" | "rotate" | "articulate" | "anatomy";

export interface GhostPreview {
  toolClass: string;
  tip: [number, number]; // sim units, predicted for display only
  orientation: number;
}

export class ViewState {
  committed: Observation | null = null;
  selectedTool: string | null = null;
  inputMode: InputMode = "drag-tip";
  pending: ActionDoc[] = [];
  ghost: GhostPreview | null = null;
  connected = true;
  /** frame_index of every committed observation, in order */
  readonly frameTrace: number[] = [];

  get frameIndex(): number {
    return this.committed ? this.committed.frame_index : -1;
  }

  /** A server message replaces the committed view and clears its ghost. */
  commit(obs: Observation): void {
    this.committed = obs;
    this.frameTrace.push(obs.frame_index);
    if (this.pending.length > 0) this.pending.shift();
    if (this.pending.length === 0) this.ghost = null;
    if (
      this.selectedTool &&
      !obs.state.tools.some((t) => t.tool_class === this.selectedTool && t.present)
    ) {
      this.selectedTool = null;
    }
  }

  /** Record an optimistic action; the preview pose is display-only. */
  enqueue(action: ActionDoc, ghost: GhostPreview | null): void {
    this.pending.push(action);
    this.ghost = ghost;
  }

  rejectPending(): void {
    if (this.pending.length > 0) this.pending.shift();
    if (this.pending.length === 0) this.ghost = null;
  }

  disconnect(): void {
    this.connected = false;
    this.pending.length = 0;
    this.ghost = null;
  }
}
