/**
 * Payload shapes of the /api/v1 endpoints. The UI renders these values
 * as-is; every pixel coordinate, residual, and RMS figure on screen is
 * produced by the server.
 */

export type Pixel = [number, number];

export interface FrameInfo {
  id: string;
  timestamp: string;
  image: string;
  cloud: string | null;
  width: number;
  height: number;
  annotated: boolean;
  has_lidar_corners: boolean;
}

export interface FrameList {
  sequence_id: string;
  cameras: string[];
  frames: FrameInfo[];
}

export interface Annotation {
  frame_id: string;
  corners: Pixel[];
  revision: number;
}

export interface SaveResult {
  frame_id: string;
  revision: number;
  conflict: boolean;
}

export interface SolveStart {
  job_id: string;
  status: string;
}

export interface FrameResidualRow {
  id: string;
  rms: number;
  residuals: number[];
}

export interface SolveResult {
  rms: number;
  frames: FrameResidualRow[];
  extrinsics: { rotation: number[][]; translation: number[] };
  report: { termination: string; iterations: number; cost: number };
  warnings: string[];
}

export interface SolveJob {
  id: string;
  status: 'running' | 'done' | 'error';
  frame_ids: string[];
  camera_id: string;
  result?: SolveResult;
  error?: string;
  error_kind?: string;
  exit_code?: number;
}

export interface CornerOverlay {
  annotated: Pixel;
  projected: Pixel;
  residual: Pixel;
  error: number;
}

export interface Overlay {
  frame_id: string;
  total: number;
  projected: number;
  pixels: Pixel[];
  depths: number[];
  corners?: CornerOverlay[];
  rms?: number;
}
