import { describe, expect, it } from 'vitest';
import {
    allowedOutboundTypes,
    decodeLine,
    MessageEncoder,
    PROTOCOL_VERSION,
} from '../src/protocol.js';

describe('decodeLine', () => {
    it('round-trips an encoded message', () => {
        const encoder = new MessageEncoder('gaze');
        const line = encoder.encode('GAZE_SAMPLE', { timestamp_us: 1, x: 2, y: 3, valid: true });
        const message = decodeLine(line);
        expect(message.type).toBe('GAZE_SAMPLE');
        expect(message.seq).toBe(0);
        expect(message.payload).toEqual({ timestamp_us: 1, x: 2, y: 3, valid: true });
    });

    it('rejects malformed JSON', () => {
        expect(() => decodeLine('{oops')).toThrow(/malformed/);
    });

    it('rejects unknown types', () => {
        expect(() => decodeLine(JSON.stringify({ type: 'NOPE', seq: 0, payload: {} }))).toThrow(
            /unknown message type/,
        );
    });

    it('rejects missing seq and payload', () => {
        expect(() => decodeLine(JSON.stringify({ type: 'HELLO', payload: {} }))).toThrow(/seq/);
        expect(() => decodeLine(JSON.stringify({ type: 'HELLO', seq: 1 }))).toThrow(/payload/);
    });
});

describe('MessageEncoder', () => {
    it('increments seq per message', () => {
        const encoder = new MessageEncoder('gaze');
        const first = decodeLine(encoder.encode('GAZE_SAMPLE', {}));
        const second = decodeLine(encoder.encode('GAZE_SAMPLE', {}));
        expect(first.seq).toBe(0);
        expect(second.seq).toBe(1);
    });

    it('hello carries the protocol version and console role', () => {
        const hello = decodeLine(new MessageEncoder('touch').hello('t'));
        expect(hello.payload.version).toBe(PROTOCOL_VERSION);
        expect(hello.payload.role).toBe('console');
    });

    it('gaze mode cannot send touch requests and vice versa', () => {
        expect(() => new MessageEncoder('gaze').encode('TOUCH_REQUEST', {})).toThrow(/may not send/);
        expect(() => new MessageEncoder('touch').encode('GAZE_SAMPLE', {})).toThrow(/may not send/);
    });

    it('allowed outbound types contain exactly the mode request plus HELLO', () => {
        expect([...allowedOutboundTypes('gaze')].sort()).toEqual(['GAZE_SAMPLE', 'HELLO']);
        expect([...allowedOutboundTypes('touch')].sort()).toEqual(['HELLO', 'TOUCH_REQUEST']);
    });
});
