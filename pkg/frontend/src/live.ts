// /ws/live consumer: single event-stream subscription with capped-backoff
// reconnect. The caller learns about connection state through onStatus so
// the UI can show a reconnect banner.

import { nextBackoffMs } from "./store.js";
import type { LiveEvent } from "./types.js";

export interface LiveConnection {
  close(): void;
}

export function connectLive(
  url: string,
  onEvent: (event: LiveEvent) => void,
  onStatus: (connected: boolean) => void,
): LiveConnection {
  let ws: WebSocket | null = null;
  let closed = false;
  let backoff: number | null = null;

  const open = () => {
    if (closed) return;
    ws = new WebSocket(url);
    ws.onopen = () => {
      backoff = null;
      onStatus(true);
    };
    ws.onmessage = (msg) => {
      try {
        onEvent(JSON.parse(msg.data as string) as LiveEvent);
      } catch {
        // non-JSON frames are ignored
      }
    };
    ws.onclose = () => {
      onStatus(false);
      if (!closed) {
        backoff = nextBackoffMs(backoff);
        setTimeout(open, backoff);
      }
    };
    ws.onerror = () => {
      // onclose follows and handles the retry
    };
  };

  open();
  return {
    close() {
      closed = true;
      ws?.close();
    },
  };
}
