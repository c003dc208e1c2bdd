/**
 * Thin typed client for the panokit annotation service. The fetch
 * implementation is injectable so tests can stub the transport; nothing
 * here transforms server values beyond JSON decoding.
 */

import type {
  Annotation,
  FrameList,
  Overlay,
  Pixel,
  SaveResult,
  SolveJob,
  SolveStart,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = 'ApiError';
  }
}

async function decode<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let detail = `${resp.status} ${resp.statusText}`;
    try {
      const body = await resp.json();
      if (typeof body?.detail === 'string') detail = body.detail;
    } catch {
      // non-JSON error body; keep the status line
    }
    throw new ApiError(detail, resp.status);
  }
  return resp.json() as Promise<T>;
}

export class ApiClient {
  constructor(
    private readonly base: string = '',
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string): string {
    return `${this.base}/api/v1${path}`;
  }

  listFrames(): Promise<FrameList> {
    return this.fetchFn(this.url('/frames')).then((r) => decode<FrameList>(r));
  }

  /** Source URL for the camera image; used directly as an <img> src. */
  imageUrl(frameId: string): string {
    return this.url(`/image/${encodeURIComponent(frameId)}/pal`);
  }

  getAnnotation(frameId: string): Promise<Annotation> {
    return this.fetchFn(this.url(`/annotations/${encodeURIComponent(frameId)}`))
      .then((r) => decode<Annotation>(r));
  }

  putAnnotation(frameId: string, corners: Pixel[], revision: number): Promise<SaveResult> {
    return this.fetchFn(this.url(`/annotations/${encodeURIComponent(frameId)}`), {
      method: 'PUT',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ corners, revision }),
    }).then((r) => decode<SaveResult>(r));
  }

  startSolve(frameIds: string[], cameraId: string): Promise<SolveStart> {
    return this.fetchFn(this.url('/solve'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ frame_ids: frameIds, camera_id: cameraId }),
    }).then((r) => decode<SolveStart>(r));
  }

  getJob(jobId: string): Promise<SolveJob> {
    return this.fetchFn(this.url(`/jobs/${encodeURIComponent(jobId)}`))
      .then((r) => decode<SolveJob>(r));
  }

  /**
   * Server-side projection of the frame's cloud. `extrinsics` is either a
   * finished job id or an inline rigid-transform JSON string.
   */
  getOverlay(
    frameId: string,
    extrinsics: string,
    cameraId: string,
    cap = 2000,
    stride = 1,
  ): Promise<Overlay> {
    const q = new URLSearchParams({
      extrinsics,
      camera: cameraId,
      cap: String(cap),
      stride: String(stride),
    });
    return this.fetchFn(this.url(`/overlay/${encodeURIComponent(frameId)}?${q}`))
      .then((r) => decode<Overlay>(r));
  }
}
