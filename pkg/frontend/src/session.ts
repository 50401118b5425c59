// Client session state: acknowledged strokes, feedback history, and a
// single-in-flight submission queue. Undo restarts the session and replays
// the remaining strokes; greedy server inference makes the replayed ranking
// identical to a fresh session with those strokes.

import type { Point } from "./geometry.js";
import type { RetrievalApi, StrokeResponse } from "./api.js";

export interface FeedbackHandler {
  (response: StrokeResponse, strokeIndex: number): void;
}

export class UiSession {
  strokes: Point[][] = [];
  percentileHistory: (number | null)[] = [];
  lastResponse: StrokeResponse | null = null;
  overlayEnabled = false;

  private sessionId: string | null = null;
  private queue: Point[][] = [];
  private inFlight = false;
  private chain: Promise<void> = Promise.resolve();

  constructor(
    private api: RetrievalApi,
    private onFeedback: FeedbackHandler = () => {},
    private onError: (err: unknown) => void = () => {},
    private targetId?: string,
  ) {}

  /** Queue one drawn stroke; resolves when its feedback (or error) landed. */
  addStroke(points: Point[]): Promise<void> {
    this.queue.push(points);
    this.chain = this.chain.then(() => this.pump());
    return this.chain;
  }

  toggleOverlay(): boolean {
    // pure view state: never touches session data
    this.overlayEnabled = !this.overlayEnabled;
    return this.overlayEnabled;
  }

  /** Remove the last stroke and replay the remainder on a fresh session. */
  undo(): Promise<void> {
    this.chain = this.chain.then(async () => {
      if (this.strokes.length === 0) return;
      const keep = this.strokes.slice(0, -1);
      this.reset();
      for (const stroke of keep) {
        await this.submitOne(stroke);
      }
    });
    return this.chain;
  }

  reset(): void {
    this.sessionId = null;
    this.strokes = [];
    this.percentileHistory = [];
    this.lastResponse = null;
    this.queue = [];
  }

  get pendingCount(): number {
    return this.queue.length + (this.inFlight ? 1 : 0);
  }

  private async pump(): Promise<void> {
    const next = this.queue.shift();
    if (!next) return;
    await this.submitOne(next);
  }

  private async submitOne(points: Point[]): Promise<void> {
    if (this.inFlight) throw new Error("submission already in flight");
    this.inFlight = true;
    try {
      if (this.sessionId === null) {
        this.sessionId = await this.api.createSession(this.targetId);
      }
      const response = await this.api.submitStroke(this.sessionId, points);
      this.strokes.push(points);
      this.percentileHistory.push(response.percentile);
      this.lastResponse = response;
      this.onFeedback(response, this.strokes.length - 1);
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
    }
  }
}
