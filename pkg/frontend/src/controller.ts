/**
 * Session state machine behind the page.
 *
 * All process knowledge lives server side; this controller only moves
 * between whole server responses. A step that the server rejects leaves
 * the current view untouched and surfaces an inline message; a response
 * that fails schema validation never replaces the view at all (banner
 * instead). One request is in flight at a time, callers are expected to
 * disable inputs while `busy` is set.
 */

import {
  ApiError,
  MalformedResponseError,
  NavigatorClient,
  NotFoundError,
  ConflictError,
  ValidationError,
} from "./client.js";
import { START_LABEL, type DfgDoc, type Health, type SessionView } from "./types.js";

export type Phase = "idle" | "ready" | "active" | "done";

export interface NavigatorState {
  phase: Phase;
  busy: boolean;
  health: Health | null;
  /** valid first activities, read off the /dfg document's START edges */
  startOptions: string[];
  view: SessionView | null;
  /** fatal for the current screen: malformed response, network failure, lost session */
  banner: string | null;
  /** step rejection: shown next to the candidates, view unchanged */
  inline: string | null;
  canRetry: boolean;
  staleSession: boolean;
}

function initial(): NavigatorState {
  return {
    phase: "idle",
    busy: false,
    health: null,
    startOptions: [],
    view: null,
    banner: null,
    inline: null,
    canRetry: false,
    staleSession: false,
  };
}

export class CaseNavigator {
  readonly state: NavigatorState = initial();
  onChange: (() => void) | null = null;

  constructor(private readonly client: NavigatorClient) {}

  private emit(): void {
    this.onChange?.();
  }

  private clearErrors(): void {
    this.state.banner = null;
    this.state.inline = null;
    this.state.canRetry = false;
    this.state.staleSession = false;
  }

  /** Runs one request under the busy flag; false when one is already in flight. */
  private async run(op: () => Promise<void>): Promise<boolean> {
    if (this.state.busy) return false;
    this.state.busy = true;
    this.emit();
    try {
      await op();
    } finally {
      this.state.busy = false;
      this.emit();
    }
    return true;
  }

  async connect(): Promise<void> {
    await this.run(async () => {
      this.clearErrors();
      try {
        const health = await this.client.health();
        const dfg = await this.client.dfg();
        this.state.health = health;
        this.state.startOptions = startActivities(dfg);
        this.state.phase = "ready";
      } catch (err) {
        this.fail(err, "connect");
      }
    });
  }

  async start(firstActivity: string, firstKpi = 0): Promise<void> {
    if (this.state.phase !== "ready") return;
    await this.run(async () => {
      this.clearErrors();
      try {
        const view = await this.client.startSession(firstActivity, firstKpi);
        this.adopt(view);
      } catch (err) {
        if (err instanceof ValidationError) {
          this.state.inline = err.message;
        } else {
          this.fail(err, "start");
        }
      }
    });
  }

  async choose(activity: string, realizedKpi?: number): Promise<void> {
    const view = this.state.view;
    if (this.state.phase !== "active" || view === null) return;
    await this.run(async () => {
      this.clearErrors();
      try {
        const next = await this.client.step(view.session_id, activity, realizedKpi);
        this.adopt(next);
      } catch (err) {
        if (err instanceof ValidationError) {
          // server said no: keep the view exactly as it was
          this.state.inline = err.valid.length
            ? `${err.message} (valid: ${err.valid.join(", ")})`
            : err.message;
        } else if (err instanceof ConflictError) {
          // already completed elsewhere; resync instead of guessing
          await this.resync(view.session_id);
        } else {
          this.fail(err, "step");
        }
      }
    });
  }

  /** Step with whatever the server flagged as recommended. */
  async acceptRecommendation(): Promise<void> {
    const pick = this.state.view?.candidates.find((c) => c.recommended);
    if (!pick) return;
    await this.choose(pick.activity);
  }

  /** Retry affordance: re-read the session rather than re-posting the step. */
  async refresh(): Promise<void> {
    const view = this.state.view;
    if (view === null) return;
    await this.run(async () => {
      this.clearErrors();
      await this.resync(view.session_id);
    });
  }

  /** Drop the session (keeps the connection) so the operator can start over. */
  restart(): void {
    if (this.state.busy) return;
    this.state.view = null;
    this.clearErrors();
    this.state.phase = this.state.health === null ? "idle" : "ready";
    this.emit();
  }

  private async resync(sessionId: string): Promise<void> {
    try {
      this.adopt(await this.client.view(sessionId));
    } catch (err) {
      this.fail(err, "refresh");
    }
  }

  private adopt(view: SessionView): void {
    this.state.view = view;
    this.state.phase = view.done ? "done" : "active";
  }

  private fail(err: unknown, what: string): void {
    if (err instanceof NotFoundError) {
      this.state.staleSession = true;
      this.state.banner = `${err.message}; start a new case`;
    } else if (err instanceof MalformedResponseError || err instanceof ApiError) {
      this.state.banner = err.message;
    } else {
      // fetch itself rejected: network trouble, worth retrying
      this.state.banner = `network failure during ${what}`;
      this.state.canRetry = this.state.view !== null;
    }
  }
}

function startActivities(dfg: DfgDoc): string[] {
  return dfg.edges.filter((e) => e.from === START_LABEL).map((e) => e.to);
}
