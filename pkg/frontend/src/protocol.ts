/** Wire protocol types mirroring the session service's JSON schema. */

export const PROTOCOL_VERSION = "1.0";

export interface Handshake {
  protocol_version: string;
  width: number;
  height: number;
  sim_scale: number;
  px_per_unit: number;
  class_names: Record<string, string>;
  tool_classes: Record<string, number>;
}

export interface GraphNode {
  node_id: number;
  class_id: number;
  centroid: [number, number];
  spread: [number, number];
  mean_flow: [number, number];
  pixel_count: number;
}

export interface GraphEdge {
  src: number;
  dst: number;
  relative_offset: [number, number];
  contact: boolean;
}

export interface SceneGraphDoc {
  frame_index: number;
  width: number;
  height: number;
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface Observation {
  protocol_version: string;
  session_id: string;
  frame_index: number;
  state: StateDoc;
  label_png: string; // base64 PNG, mode L
  sim_png: string; // base64 PNG, mode RGB
  graph: SceneGraphDoc;
}

export interface ArticulationDoc {
  bend_angle: number;
  opening_angle: number;
}

export interface ToolStateDoc {
  tool_class: string;
  tip: [number, number];
  orientation: number;
  articulation: ArticulationDoc;
  present: boolean;
}

export interface StateDoc {
  anatomy: unknown;
  tools: ToolStateDoc[];
  frame_index: number;
  globe_scale: number;
}

export interface ToolDeltaDoc {
  tool_class: string;
  delta_tip?: [number, number];
  delta_orientation?: number;
  delta_bend?: number;
  delta_opening?: number;
  spawn?: ToolStateDoc;
  despawn?: boolean;
}

export interface AnatomyDeltaDoc {
  delta_translation?: [number, number];
  delta_yaw?: number;
  delta_pitch?: number;
  delta_pupil_dilation?: number;
}

export interface ActionDoc {
  tool_deltas?: ToolDeltaDoc[];
  anatomy_delta?: AnatomyDeltaDoc;
}

export interface ScriptDoc {
  fps: number;
  source_id: string;
  provenance: string[];
  frames: { anatomy: unknown; tools: ToolStateDoc[] }[];
  phase_labels?: string[] | null;
}

export interface ErrorDoc {
  protocol_version: string;
  error: string;
  detail: string;
}
