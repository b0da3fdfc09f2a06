// Gateway connection: one duplex WebSocket carrying newline-delimited JSON
// (one message per frame). While disconnected, sends are dropped, not queued.

import { ConsoleMode, MessageEncoder, MessageType, WireMessage, decodeLine } from './protocol.js';

export interface GatewayClientOptions {
    url: string;
    mode: ConsoleMode;
    name: string;
    onMessage: (message: WireMessage) => void;
    onStatus: (connected: boolean, detail: string) => void;
}

export class GatewayClient {
    private socket: WebSocket | null = null;
    private encoder: MessageEncoder;
    connected = false;

    constructor(private readonly options: GatewayClientOptions) {
        this.encoder = new MessageEncoder(options.mode);
    }

    connect(): void {
        const socket = new WebSocket(this.options.url);
        this.socket = socket;
        socket.onopen = () => {
            this.connected = true;
            socket.send(this.encoder.hello(this.options.name));
            this.options.onStatus(true, 'connected');
        };
        socket.onclose = (event) => {
            this.connected = false;
            this.socket = null;
            this.options.onStatus(false, event.reason || 'disconnected');
        };
        socket.onerror = () => {
            this.options.onStatus(false, 'connection error');
        };
        socket.onmessage = (event) => {
            for (const line of String(event.data).split('\n')) {
                if (!line.trim()) {
                    continue;
                }
                try {
                    this.options.onMessage(decodeLine(line));
                } catch (err) {
                    console.warn('dropped undecodable message', err);
                }
            }
        };
    }

    /** Send one message; drops silently when the link is down. */
    send(type: MessageType, payload: Record<string, unknown>): boolean {
        if (!this.connected || this.socket === null) {
            return false;
        }
        this.socket.send(this.encoder.encode(type, payload));
        return true;
    }

    close(): void {
        this.socket?.close();
    }
}
