import { describe, expect, test } from 'vitest';

import { residualRows, runSolve, SolveError, worstFrame } from '../src/review';
import type { SolveJob, SolveResult } from '../src/types';

function solveResult(rows: [string, number][]): SolveResult {
  return {
    rms: Math.sqrt(rows.reduce((s, [, r]) => s + r * r, 0) / rows.length),
    frames: rows.map(([id, rms]) => ({ id, rms, residuals: [] })),
    extrinsics: { rotation: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], translation: [0, 0, 0] },
    report: { termination: 'gradient_tolerance', iterations: 5, cost: 0 },
    warnings: [],
  };
}

function jobSequence(states: Partial<SolveJob>[]) {
  let polls = 0;
  return {
    startSolve: async () => ({ job_id: 'job-000007', status: 'running' }),
    getJob: async (jobId: string) => {
      expect(jobId).toBe('job-000007');
      const state = states[Math.min(polls, states.length - 1)];
      polls += 1;
      return {
        id: jobId, status: 'running', frame_ids: [], camera_id: 'cam0',
        ...state,
      } as SolveJob;
    },
    pollCount: () => polls,
  };
}

describe('runSolve', () => {
  test('polls until the job reports done and returns its result', async () => {
    const result = solveResult([['f0', 0.1], ['f1', 0.2]]);
    const api = jobSequence([{}, {}, { status: 'done', result }]);
    const got = await runSolve(api, ['f0', 'f1'], 'cam0', 1);
    expect(got.jobId).toBe('job-000007');
    expect(got.result).toEqual(result);
    expect(api.pollCount()).toBe(3);
  });

  test('surfaces the server error message verbatim with its exit code', async () => {
    const api = jobSequence([{
      status: 'error',
      error: 'whiteboard corners project behind the camera at the initial pose',
      error_kind: 'DepthNonPositive',
      exit_code: 2,
    }]);
    const err = await runSolve(api, ['f0'], 'cam0', 1).catch((e) => e);
    expect(err).toBeInstanceOf(SolveError);
    expect(err.message).toBe(
      'whiteboard corners project behind the camera at the initial pose');
    expect(err.exitCode).toBe(2);
    expect(err.kind).toBe('DepthNonPositive');
  });

  test('gives up after the timeout when the job never finishes', async () => {
    const api = jobSequence([{}]);
    const err = await runSolve(api, ['f0'], 'cam0', 1, 25).catch((e) => e);
    expect(err).toBeInstanceOf(SolveError);
    expect(err.message).toContain('timed out');
  });
});

describe('residual review', () => {
  test('rows are ordered worst first', () => {
    const rows = residualRows(solveResult([['f0', 0.2], ['f1', 1.7], ['f2', 0.05]]));
    expect(rows.map((r) => r.frameId)).toEqual(['f1', 'f0', 'f2']);
    expect(rows[0].rms).toBeCloseTo(1.7, 12);
  });

  test('ties keep the server frame order', () => {
    const rows = residualRows(solveResult([['a', 0.5], ['b', 0.5], ['c', 0.5]]));
    expect(rows.map((r) => r.frameId)).toEqual(['a', 'b', 'c']);
  });

  test('worstFrame picks the top row and handles empty results', () => {
    expect(worstFrame(solveResult([['f0', 0.2], ['f1', 1.7]]))).toBe('f1');
    expect(worstFrame(solveResult([]))).toBeNull();
  });
});
