// Thin client for the retrieval service HTTP/JSON API.

import type { Point } from "./geometry.js";

export interface RankEntry {
  item_id: string;
  distance: number;
}

export interface StrokeResponse {
  rank_list: RankEntry[];
  percentile: number | null;
  glimpse_trace: [number, number][];
}

export interface RetrievalApi {
  createSession(targetId?: string): Promise<string>;
  submitStroke(sessionId: string, points: Point[]): Promise<StrokeResponse>;
  galleryIds(): Promise<string[]>;
  imageUrl(itemId: string): string;
}

export class HttpRetrievalApi implements RetrievalApi {
  constructor(private base: string = "") {}

  async createSession(targetId?: string): Promise<string> {
    const init: RequestInit = { method: "POST" };
    if (targetId) {
      init.body = JSON.stringify({ target_id: targetId });
      init.headers = { "content-type": "application/json" };
    }
    const resp = await fetch(`${this.base}/session`, init);
    if (!resp.ok) throw new Error(`createSession failed: ${resp.status}`);
    return (await resp.json()).session_id as string;
  }

  async submitStroke(sessionId: string, points: Point[]): Promise<StrokeResponse> {
    const resp = await fetch(`${this.base}/session/${sessionId}/stroke`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ points }),
    });
    if (!resp.ok) throw new Error(`submitStroke failed: ${resp.status}`);
    return (await resp.json()) as StrokeResponse;
  }

  async galleryIds(): Promise<string[]> {
    const resp = await fetch(`${this.base}/gallery`);
    if (!resp.ok) throw new Error(`gallery failed: ${resp.status}`);
    return (await resp.json()).ids as string[];
  }

  imageUrl(itemId: string): string {
    return `${this.base}/images/${itemId}.png`;
  }
}
