/**
 * Typed client for the avatarlab HTTP service.
 *
 * Every pixel and every avatar mutation in the studio goes through this
 * module; nothing here computes imagery. Errors carry the service's
 * `detail` message.
 */

export interface Camera {
  yaw?: number;
  pitch?: number;
  distance?: number;
  f?: number;
  size?: [number, number];
}

export interface Health {
  ready: boolean;
  models: { caae: boolean; gm: boolean; gctm: boolean };
  avatars: number;
  checkpoint: string;
}

export interface GenerateResult {
  avatar_id: string;
  attrs_parsed: Record<string, string | boolean>;
  unrecognized_tokens: string[];
  checkpoint: string;
}

export interface EditResult {
  avatar_id: string;
  changed: boolean;
  attrs_parsed: Record<string, string | boolean>;
  unrecognized_tokens: string[];
  checkpoint: string;
}

export interface InterpolateResult {
  avatar_id: string;
  alpha: number;
  checkpoint: string;
}

export interface AvatarSummary {
  avatar_id: string;
  created_at: string;
  provenance: Record<string, unknown>;
  [extra: string]: unknown;
}

export interface AvatarInfo extends AvatarSummary {
  roots: string[];
  /** Breadcrumbs from this avatar back to its first root. */
  chain: AvatarSummary[];
  checkpoint: string;
}

export interface RenderResult {
  blob: Blob;
  avatarId: string;
  expression: string;
}

export class ApiError extends Error {
  readonly status: number;

  constructor(status: number, detail: string) {
    super(detail);
    this.status = status;
  }
}

async function failFrom(res: Response): Promise<never> {
  let detail = res.statusText || `HTTP ${res.status}`;
  try {
    const body = await res.json();
    if (body && typeof body.detail === "string") detail = body.detail;
  } catch {
    /* non-JSON error body; keep the status text */
  }
  throw new ApiError(res.status, detail);
}

export class StudioApi {
  constructor(readonly base: string = "") {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const res = await fetch(this.base + path, init);
    if (!res.ok) await failFrom(res);
    return (await res.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  health(): Promise<Health> {
    return this.json<Health>("/health");
  }

  generate(req: {
    prompt: string;
    seed: number;
    steps?: number;
    guidance?: number;
  }): Promise<GenerateResult> {
    return this.post<GenerateResult>("/generate", req);
  }

  async render(req: {
    avatarId: string;
    camera?: Camera;
    exp?: string | number[];
  }): Promise<RenderResult> {
    const body: Record<string, unknown> = { avatar_id: req.avatarId };
    if (req.camera) body.camera = req.camera;
    if (req.exp !== undefined) body.exp = req.exp;
    const res = await fetch(this.base + "/render", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!res.ok) await failFrom(res);
    return {
      blob: await res.blob(),
      avatarId: res.headers.get("X-Avatar-Id") ?? req.avatarId,
      expression: res.headers.get("X-Expression") ?? "",
    };
  }

  edit(req: {
    avatarId: string;
    prompt: string;
    which: "global" | "tex" | "geo";
    maskPngB64?: string;
    maskRegion?: string;
    seed?: number;
    steps?: number;
    guidance?: number;
  }): Promise<EditResult> {
    const body: Record<string, unknown> = {
      avatar_id: req.avatarId,
      prompt: req.prompt,
      which: req.which,
    };
    if (req.maskPngB64 !== undefined) body.mask_png_b64 = req.maskPngB64;
    if (req.maskRegion !== undefined) body.mask_region = req.maskRegion;
    if (req.seed !== undefined) body.seed = req.seed;
    if (req.steps !== undefined) body.steps = req.steps;
    if (req.guidance !== undefined) body.guidance = req.guidance;
    return this.post<EditResult>("/edit", body);
  }

  interpolate(idA: string, idB: string, alpha: number): Promise<InterpolateResult> {
    const q = new URLSearchParams({ id_a: idA, id_b: idB, alpha: String(alpha) });
    return this.json<InterpolateResult>(`/interpolate?${q}`);
  }

  avatar(id: string): Promise<AvatarInfo> {
    return this.json<AvatarInfo>(`/avatar/${id}`);
  }

  avatars(): Promise<{ avatars: AvatarSummary[] }> {
    return this.json<{ avatars: AvatarSummary[] }>("/avatars");
  }
}
