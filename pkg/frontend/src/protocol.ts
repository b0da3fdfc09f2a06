// Wire protocol: newline-delimited JSON envelopes shared with the engine.

export const PROTOCOL_VERSION = 1;

export type MessageType =
    | 'HELLO'
    | 'CONFIG'
    | 'GAZE_SAMPLE'
    | 'DETECTION_FRAME'
    | 'TOUCH_REQUEST'
    | 'INTENT'
    | 'ANNOUNCEMENT'
    | 'ROBOT_STATE'
    | 'SCENE_SNAPSHOT'
    | 'METRICS'
    | 'FAULT';

export interface WireMessage {
    type: MessageType;
    seq: number;
    payload: Record<string, unknown>;
}

export type ConsoleMode = 'gaze' | 'touch';

// The console only ever transmits its own mode's request type (plus HELLO).
// Enforcing this at the send boundary is what keeps a mode switch from
// leaking the other mode's messages.
export function allowedOutboundTypes(mode: ConsoleMode): Set<MessageType> {
    const types = new Set<MessageType>(['HELLO']);
    types.add(mode === 'gaze' ? 'GAZE_SAMPLE' : 'TOUCH_REQUEST');
    return types;
}

const KNOWN_TYPES: Set<string> = new Set([
    'HELLO', 'CONFIG', 'GAZE_SAMPLE', 'DETECTION_FRAME', 'TOUCH_REQUEST',
    'INTENT', 'ANNOUNCEMENT', 'ROBOT_STATE', 'SCENE_SNAPSHOT', 'METRICS', 'FAULT',
]);

export function decodeLine(line: string): WireMessage {
    let data: unknown;
    try {
        data = JSON.parse(line);
    } catch (err) {
        throw new Error(`malformed message line: ${(err as Error).message}`);
    }
    const obj = data as Record<string, unknown>;
    if (typeof obj !== 'object' || obj === null) {
        throw new Error('message must be a JSON object');
    }
    if (typeof obj.type !== 'string' || !KNOWN_TYPES.has(obj.type)) {
        throw new Error(`unknown message type ${String(obj.type)}`);
    }
    if (typeof obj.seq !== 'number') {
        throw new Error('message missing integer seq');
    }
    if (typeof obj.payload !== 'object' || obj.payload === null) {
        throw new Error('message missing payload object');
    }
    return {
        type: obj.type as MessageType,
        seq: obj.seq,
        payload: obj.payload as Record<string, unknown>,
    };
}

/** Outbound encoder with a per-connection monotone seq and a mode gate. */
export class MessageEncoder {
    private seq = 0;
    constructor(private readonly mode: ConsoleMode) {}

    encode(type: MessageType, payload: Record<string, unknown>): string {
        if (!allowedOutboundTypes(this.mode).has(type)) {
            throw new Error(`mode ${this.mode} may not send ${type}`);
        }
        const message: WireMessage = { type, seq: this.seq, payload };
        this.seq += 1;
        return JSON.stringify(message);
    }

    hello(name: string): string {
        return this.encode('HELLO', {
            version: PROTOCOL_VERSION,
            role: 'console',
            name,
        });
    }
}
