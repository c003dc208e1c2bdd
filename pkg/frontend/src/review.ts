/**
 * Solve orchestration and residual review. Starts a solve job, polls it
 * to completion, and orders the per-frame RMS table the server returns;
 * the "worst frame" shortcut is just the top of that ordering.
 */

import type { SolveJob, SolveResult, SolveStart } from './types.js';

export interface SolveApi {
  startSolve(frameIds: string[], cameraId: string): Promise<SolveStart>;
  getJob(jobId: string): Promise<SolveJob>;
}

/** Carries the server's error message verbatim plus its exit code. */
export class SolveError extends Error {
  constructor(message: string, readonly exitCode?: number, readonly kind?: string) {
    super(message);
    this.name = 'SolveError';
  }
}

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export async function runSolve(
  api: SolveApi,
  frameIds: string[],
  cameraId: string,
  pollMs = 250,
  timeoutMs = 60000,
): Promise<{ jobId: string; result: SolveResult }> {
  const start = await api.startSolve(frameIds, cameraId);
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    const job = await api.getJob(start.job_id);
    if (job.status === 'done' && job.result) {
      return { jobId: start.job_id, result: job.result };
    }
    if (job.status === 'error') {
      throw new SolveError(job.error ?? 'solve failed', job.exit_code, job.error_kind);
    }
    if (Date.now() >= deadline) {
      throw new SolveError(`solve job ${start.job_id} timed out after ${timeoutMs} ms`);
    }
    await sleep(pollMs);
  }
}

export interface ReviewRow {
  frameId: string;
  rms: number;
}

/** Per-frame RMS rows, worst first. Ties keep the server's frame order. */
export function residualRows(result: SolveResult): ReviewRow[] {
  return result.frames
    .map((f) => ({ frameId: f.id, rms: f.rms }))
    .sort((a, b) => b.rms - a.rms);
}

export function worstFrame(result: SolveResult): string | null {
  const rows = residualRows(result);
  return rows.length ? rows[0].frameId : null;
}
