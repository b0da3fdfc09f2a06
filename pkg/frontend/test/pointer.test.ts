import { describe, expect, it } from 'vitest';
import { clientToScene, fitFrame, GazeSampleOut, PointerSampler } from '../src/pointer.js';

describe('fitFrame', () => {
    it('letterboxes a wide frame into a squarer canvas', () => {
        const t = fitFrame(1280, 720, 1920, 1080);
        expect(t.scale).toBeCloseTo(1280 / 1920);
        expect(t.offsetX).toBeCloseTo(0);
        expect(t.offsetY).toBeCloseTo(0);
        const t2 = fitFrame(1000, 1000, 1920, 1080);
        expect(t2.scale).toBeCloseTo(1000 / 1920);
        expect(t2.offsetY).toBeGreaterThan(0);
    });
});

describe('clientToScene', () => {
    const t = fitFrame(960, 540, 1920, 1080); // scale 0.5, no offsets

    it('maps canvas coordinates back to scene pixels', () => {
        const point = clientToScene(t, 480, 270);
        expect(point.x).toBeCloseTo(960);
        expect(point.y).toBeCloseTo(540);
        expect(point.inside).toBe(true);
    });

    it('flags positions outside the rendered frame', () => {
        expect(clientToScene(t, -5, 10).inside).toBe(false);
        expect(clientToScene(t, 961, 10).inside).toBe(false);
    });
});

function makeSampler(
    pointer: () => ReturnType<typeof clientToScene> | null,
    rateHz = 20,
) {
    const emitted: GazeSampleOut[] = [];
    let nowMs = 0;
    const timers: { fn: () => void; intervalMs: number }[] = [];
    const sampler = new PointerSampler({
        rateHz,
        getPointer: pointer,
        emit: (sample) => emitted.push(sample),
        nowMs: () => nowMs,
        schedule: (fn, intervalMs) => {
            timers.push({ fn, intervalMs });
            return timers.length - 1;
        },
        cancel: () => {
            timers.length = 0;
        },
    });
    const advance = (ms: number) => {
        // Simulated clock: fire each timer as often as its interval fits.
        const timer = timers[0];
        if (!timer) return;
        const steps = Math.round(ms / timer.intervalMs);
        for (let i = 0; i < steps; i += 1) {
            nowMs += timer.intervalMs;
            timer.fn();
        }
    };
    return { sampler, emitted, advance };
}

describe('PointerSampler', () => {
    it('emits 100 +/- 2 samples over five seconds at 20 Hz', () => {
        const { sampler, emitted, advance } = makeSampler(() => ({ x: 10, y: 10, inside: true }));
        sampler.start();
        advance(5000);
        expect(emitted.length).toBeGreaterThanOrEqual(98);
        expect(emitted.length).toBeLessThanOrEqual(102);
        sampler.stop();
        expect(sampler.running).toBe(false);
    });

    it('timestamps are strictly monotone even with a stalled clock', () => {
        const { sampler, emitted } = makeSampler(() => ({ x: 1, y: 2, inside: true }));
        sampler.sampleOnce();
        sampler.sampleOnce(); // same nowMs
        sampler.sampleOnce();
        const stamps = emitted.map((s) => s.timestamp_us);
        expect(stamps[1]).toBeGreaterThan(stamps[0]);
        expect(stamps[2]).toBeGreaterThan(stamps[1]);
    });

    it('off-view pointer produces valid=false samples', () => {
        const { sampler, emitted } = makeSampler(() => null);
        sampler.sampleOnce();
        expect(emitted[0].valid).toBe(false);
        const outside = makeSampler(() => ({ x: -4, y: 0, inside: false }));
        outside.sampler.sampleOnce();
        expect(outside.emitted[0].valid).toBe(false);
    });

    it('in-view pointer forwards scene coordinates untouched', () => {
        const { sampler, emitted } = makeSampler(() => ({ x: 123.4, y: 567.8, inside: true }));
        sampler.sampleOnce();
        expect(emitted[0]).toMatchObject({ x: 123.4, y: 567.8, valid: true });
    });

    it('start is idempotent', () => {
        const { sampler, emitted, advance } = makeSampler(() => null);
        sampler.start();
        sampler.start();
        advance(1000);
        expect(emitted.length).toBeLessThanOrEqual(21);
    });
});
