/** Thin client for the enhancement service. The UI never touches pixels
 * itself; every image shown comes back from these calls. */

export interface ReferenceEntry {
  id: string;
  mean_v: number;
  thumbnail_png_base64: string;
}

export interface HealthInfo {
  status: string;
  ckpt?: string;
}

export interface EnhanceResponse {
  bytes: ArrayBuffer;
  meanV: number;
}

export type RefChoice = { refId: string } | { refFile: Blob };

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function errorFromResponse(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.error === "string") detail = body.error;
  } catch {
    /* non-JSON error body */
  }
  return new ApiError(res.status, detail);
}

export class ServiceClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<HealthInfo> {
    const res = await this.fetchFn(this.url("/health"));
    if (!res.ok) throw await errorFromResponse(res);
    return res.json();
  }

  async references(): Promise<ReferenceEntry[]> {
    const res = await this.fetchFn(this.url("/references"));
    if (!res.ok) throw await errorFromResponse(res);
    const entries: ReferenceEntry[] = await res.json();
    // the service sorts by brightness already; keep the invariant locally
    return entries.slice().sort((a, b) => a.mean_v - b.mean_v);
  }

  async enhance(low: Blob, ref: RefChoice): Promise<EnhanceResponse> {
    const form = new FormData();
    form.append("low", low, "low.png");
    if ("refId" in ref) {
      form.append("ref_id", ref.refId);
    } else {
      form.append("ref", ref.refFile, "ref.png");
    }
    const res = await this.fetchFn(this.url("/enhance"), {
      method: "POST",
      body: form,
    });
    if (!res.ok) throw await errorFromResponse(res);
    const meanV = parseFloat(res.headers.get("X-Mean-V") ?? "NaN");
    return { bytes: await res.arrayBuffer(), meanV };
  }
}
