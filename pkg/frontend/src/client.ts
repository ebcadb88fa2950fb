/** Session client: the only path by which state enters the UI.
 *
 * Every committed observation comes from a server message; the client never
 * simulates. Actions are queued FIFO and sent one at a time, over the
 * websocket when available, otherwise over HTTP POST. A message log records
 * every committed bundle so tests can assert the no-client-side-simulation
 * invariant and the frame_index trace.
 */
import type {
  ActionDoc,
  ErrorDoc,
  Handshake,
  Observation,
  ScriptDoc,
} from "./protocol.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onmessage: ((ev: { data: string }) => void) | null;
  onclose: (() => void) | null;
  onerror: ((ev: unknown) => void) | null;
  onopen: (() => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  /** e.g. "http://127.0.0.1:8631" (no trailing slash) */
  baseUrl: string;
  /** browser: (url) => new WebSocket(url); omit to use HTTP stepping */
  socketFactory?: SocketFactory;
  fetchImpl?: typeof fetch;
}

export class ServerError extends Error {
  constructor(public doc: ErrorDoc, public status: number) {
    super(`${doc.error}: ${doc.detail}`);
  }
}

export class EyesimClient {
  readonly baseUrl: string;
  handshake: Handshake | null = null;
  sessionId: string | null = null;
  /** every committed observation, in arrival order */
  readonly messageLog: Observation[] = [];

  private fetchImpl: typeof fetch;
  private socketFactory?: SocketFactory;
  private socket: SocketLike | null = null;
  private waiters: {
    resolve: (o: Observation) => void;
    reject: (e: Error) => void;
  }[] = [];
  private queue: Promise<unknown> = Promise.resolve();
  onDisconnect: (() => void) | null = null;

  constructor(opts: ClientOptions) {
    this.baseUrl = opts.baseUrl.replace(/\/$/, "");
    this.fetchImpl = opts.fetchImpl ?? fetch.bind(globalThis);
    this.socketFactory = opts.socketFactory;
  }

  private async http<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers: { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const doc = await res.json();
    if (!res.ok) throw new ServerError(doc as ErrorDoc, res.status);
    return doc as T;
  }

  async connect(spec?: unknown): Promise<Observation> {
    this.handshake = await this.http<Handshake>("GET", "/api/handshake");
    const res = await this.http<{
      session_id: string;
      handshake: Handshake;
      observation: Observation;
    }>("POST", "/api/sessions", spec ? { spec } : {});
    this.sessionId = res.session_id;
    this.commit(res.observation);
    if (this.socketFactory) await this.openSocket();
    return res.observation;
  }

  private commit(obs: Observation): Observation {
    this.messageLog.push(obs);
    return obs;
  }

  private openSocket(): Promise<void> {
    const url =
      this.baseUrl.replace(/^http/, "ws") +
      `/api/sessions/${this.sessionId}/ws`;
    const sock = this.socketFactory!(url);
    this.socket = sock;
    sock.onmessage = (ev) => {
      const msg = JSON.parse(ev.data);
      const waiter = this.waiters.shift();
      if (!waiter) return;
      if (msg.type === "frame") waiter.resolve(msg as Observation);
      else waiter.reject(new ServerError(msg as ErrorDoc, 400));
    };
    sock.onclose = () => {
      this.socket = null;
      for (const w of this.waiters.splice(0))
        w.reject(new Error("connection lost"));
      this.onDisconnect?.();
    };
    sock.onerror = sock.onclose;
    return new Promise((resolve) => {
      sock.onopen = () => resolve();
    });
  }

  /** Queue one action; resolves with the committed observation. */
  step(action: ActionDoc): Promise<Observation> {
    const run = this.queue.then(() => this.stepNow(action));
    // keep the FIFO alive across failures
    this.queue = run.catch(() => undefined);
    return run;
  }

  private async stepNow(action: ActionDoc): Promise<Observation> {
    if (this.socket) {
      const obs = await new Promise<Observation>((resolve, reject) => {
        this.waiters.push({ resolve, reject });
        this.socket!.send(JSON.stringify({ type: "step", action }));
      });
      return this.commit(obs);
    }
    const obs = await this.http<Observation>(
      "POST",
      `/api/sessions/${this.sessionId}/step`,
      { action },
    );
    return this.commit(obs);
  }

  async reset(): Promise<Observation> {
    const obs = await this.http<Observation>(
      "POST",
      `/api/sessions/${this.sessionId}/reset`,
    );
    return this.commit(obs);
  }

  async exportScript(): Promise<ScriptDoc> {
    const doc = await this.http<{ script: ScriptDoc }>(
      "GET",
      `/api/sessions/${this.sessionId}/export`,
    );
    return doc.script;
  }

  /** OOD launcher: author a scenario server-side. */
  async authorScenario(body: {
    tool_classes: string[];
    entry_angles: number[];
    primitive?: string;
    seed?: number;
    num_frames?: number;
  }): Promise<ScriptDoc> {
    const doc = await this.http<{ script: ScriptDoc }>("POST", "/api/ood", body);
    return doc.script;
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
  }
}

/** A session spec whose initial state is frame 0 of an authored script. */
export function specFromScript(script: ScriptDoc): unknown {
  const f0 = script.frames[0];
  return {
    initial_state: {
      anatomy: f0.anatomy,
      tools: f0.tools,
      frame_index: 0,
      globe_scale: 1.0,
    },
    seed: 0,
    bounds: [-1.0, -1.0, 1.0, 1.0],
    schedule: null,
  };
}
