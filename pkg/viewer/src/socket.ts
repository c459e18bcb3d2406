/** Live-drive subscription with automatic reconnect.
 *
 * The socket constructor is injectable so tests can script sessions without
 * a network; the default uses the browser WebSocket.
 */

export interface SocketLike {
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  close(): void;
}

export type SocketFactory = (url: string) => SocketLike;

export type SocketStatus = "idle" | "connecting" | "open" | "retrying" | "closed";

export interface DriveSocketOptions {
  factory?: SocketFactory;
  baseDelayMs?: number;
  maxDelayMs?: number;
  schedule?: (fn: () => void, delayMs: number) => unknown;
}

export class DriveSocket {
  status: SocketStatus = "idle";
  retries = 0;
  private socket: SocketLike | null = null;
  private stopped = false;
  private readonly factory: SocketFactory;
  private readonly baseDelayMs: number;
  private readonly maxDelayMs: number;
  private readonly schedule: (fn: () => void, delayMs: number) => unknown;

  constructor(
    private readonly url: string,
    private readonly onFrame: (text: string) => void,
    private readonly onStatus: (status: SocketStatus, retries: number) => void = () => {},
    opts: DriveSocketOptions = {},
  ) {
    this.factory = opts.factory ?? ((u: string) => new WebSocket(u) as unknown as SocketLike);
    this.baseDelayMs = opts.baseDelayMs ?? 500;
    this.maxDelayMs = opts.maxDelayMs ?? 8000;
    this.schedule = opts.schedule ?? ((fn, ms) => setTimeout(fn, ms));
  }

  connect(): void {
    if (this.stopped) return;
    this.setStatus("connecting");
    const sock = this.factory(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.retries = 0;
      this.setStatus("open");
    };
    sock.onmessage = (ev) => {
      if (typeof ev.data === "string") {
        this.onFrame(ev.data);
      }
    };
    sock.onerror = () => {
      /* close follows; retry handled there */
    };
    sock.onclose = () => {
      if (this.stopped) return;
      this.setStatus("retrying");
      const delay = Math.min(this.baseDelayMs * 2 ** this.retries, this.maxDelayMs);
      this.retries += 1;
      this.schedule(() => this.connect(), delay);
    };
  }

  close(): void {
    this.stopped = true;
    this.setStatus("closed");
    if (this.socket) {
      this.socket.close();
      this.socket = null;
    }
  }

  private setStatus(status: SocketStatus): void {
    this.status = status;
    this.onStatus(status, this.retries);
  }
}
