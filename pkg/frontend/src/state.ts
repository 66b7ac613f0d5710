/** Per-tab session state: the uploaded low-light image, the enhanced
 * versions, and a single-in-flight request policy (rapid clicks coalesce
 * into at most one queued request). */

import { EnhanceResponse, RefChoice, ServiceClient } from "./api";

export interface EnhanceResult {
  key: string; // ref id or custom upload label
  refThumbnailUrl: string | null;
  bytes: ArrayBuffer;
  meanV: number;
}

export interface LowImage {
  name: string;
  blob: Blob;
}

interface PendingRequest {
  ref: RefChoice;
  key: string;
  refThumbnailUrl: string | null;
}

export type SessionListener = () => void;

export class Session {
  low: LowImage | null = null;
  results: EnhanceResult[] = [];
  lastError: string | null = null;
  serviceDown = false;

  private inflight = false;
  private queued: PendingRequest | null = null;
  private listeners: SessionListener[] = [];

  constructor(private readonly client: ServiceClient) {}

  onChange(listener: SessionListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  get busy(): boolean {
    return this.inflight;
  }

  setLow(name: string, blob: Blob): void {
    this.low = { name, blob }; // a second upload replaces the first
    this.lastError = null;
    this.notify();
  }

  clear(): void {
    this.results = [];
    this.lastError = null;
    this.notify();
  }

  dismissError(): void {
    this.lastError = null;
    this.notify();
  }

  /** Results ordered by output brightness, darkest first. */
  orderedResults(): EnhanceResult[] {
    return this.results.slice().sort((a, b) => a.meanV - b.meanV);
  }

  /** Enhance the session's low image. While a request is in flight, the
   * latest call waits in a one-slot queue (newer calls replace it). */
  async requestEnhance(ref: RefChoice, key: string, refThumbnailUrl: string | null): Promise<void> {
    if (!this.low) {
      this.lastError = "upload a low-light image first";
      this.notify();
      return;
    }
    if (this.inflight) {
      this.queued = { ref, key, refThumbnailUrl };
      return;
    }
    this.inflight = true;
    this.notify();
    try {
      const response: EnhanceResponse = await this.client.enhance(this.low.blob, ref);
      this.results = this.results.filter((r) => r.key !== key);
      this.results.push({
        key,
        refThumbnailUrl,
        bytes: response.bytes,
        meanV: response.meanV,
      });
      this.serviceDown = false;
      this.lastError = null;
    } catch (err) {
      if (err instanceof TypeError) {
        // fetch network failure: the service is unreachable
        this.serviceDown = true;
      } else {
        this.lastError = err instanceof Error ? err.message : String(err);
      }
    } finally {
      this.inflight = false;
      this.notify();
    }
    const next = this.queued;
    this.queued = null;
    if (next) {
      await this.requestEnhance(next.ref, next.key, next.refThumbnailUrl);
    }
  }

  async retryService(): Promise<boolean> {
    try {
      await this.client.health();
      this.serviceDown = false;
      this.notify();
      return true;
    } catch {
      this.serviceDown = true;
      this.notify();
      return false;
    }
  }

  markServiceDown(): void {
    this.serviceDown = true;
    this.notify();
  }
}
