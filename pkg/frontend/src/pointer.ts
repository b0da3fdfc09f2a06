// Pointer-as-gaze: samples the pointer over the rendered user view at a
// fixed rate and maps it into scene-camera pixel coordinates, standing in
// for a wearable tracker at desk scale. Off-view positions become
// valid=false samples, mirroring tracker confidence loss.

export interface ViewTransform {
    scale: number;
    offsetX: number;
    offsetY: number;
    frameWidth: number;
    frameHeight: number;
}

/** Letterbox a frameWidth x frameHeight view into a canvas. */
export function fitFrame(
    canvasWidth: number,
    canvasHeight: number,
    frameWidth: number,
    frameHeight: number,
): ViewTransform {
    const scale = Math.min(canvasWidth / frameWidth, canvasHeight / frameHeight);
    return {
        scale,
        offsetX: (canvasWidth - frameWidth * scale) / 2,
        offsetY: (canvasHeight - frameHeight * scale) / 2,
        frameWidth,
        frameHeight,
    };
}

export interface ScenePoint {
    x: number;
    y: number;
    inside: boolean;
}

export function clientToScene(t: ViewTransform, clientX: number, clientY: number): ScenePoint {
    const x = (clientX - t.offsetX) / t.scale;
    const y = (clientY - t.offsetY) / t.scale;
    const inside = x >= 0 && x <= t.frameWidth && y >= 0 && y <= t.frameHeight;
    return { x, y, inside };
}

export interface GazeSampleOut {
    timestamp_us: number;
    x: number;
    y: number;
    valid: boolean;
}

export interface PointerSamplerOptions {
    rateHz?: number;
    /** Current pointer position in scene coordinates, or null when off-view. */
    getPointer: () => ScenePoint | null;
    emit: (sample: GazeSampleOut) => void;
    nowMs?: () => number;
    schedule?: (fn: () => void, intervalMs: number) => unknown;
    cancel?: (handle: unknown) => void;
}

export class PointerSampler {
    readonly rateHz: number;
    private readonly getPointer: () => ScenePoint | null;
    private readonly emit: (sample: GazeSampleOut) => void;
    private readonly nowMs: () => number;
    private readonly schedule: (fn: () => void, intervalMs: number) => unknown;
    private readonly cancel: (handle: unknown) => void;
    private handle: unknown = null;
    private lastStampUs = -1;

    constructor(options: PointerSamplerOptions) {
        this.rateHz = options.rateHz ?? 20;
        this.getPointer = options.getPointer;
        this.emit = options.emit;
        this.nowMs = options.nowMs ?? (() => performance.now());
        this.schedule = options.schedule ?? ((fn, ms) => setInterval(fn, ms));
        this.cancel = options.cancel ?? ((h) => clearInterval(h as number));
    }

    get running(): boolean {
        return this.handle !== null;
    }

    start(): void {
        if (this.handle !== null) {
            return;
        }
        this.handle = this.schedule(() => this.sampleOnce(), 1000 / this.rateHz);
    }

    stop(): void {
        if (this.handle !== null) {
            this.cancel(this.handle);
            this.handle = null;
        }
    }

    sampleOnce(): void {
        // Timestamps must be strictly monotone even if the clock stalls.
        const stamp = Math.max(Math.round(this.nowMs() * 1000), this.lastStampUs + 1);
        this.lastStampUs = stamp;
        const point = this.getPointer();
        if (point !== null && point.inside) {
            this.emit({ timestamp_us: stamp, x: point.x, y: point.y, valid: true });
        } else {
            this.emit({ timestamp_us: stamp, x: 0, y: 0, valid: false });
        }
    }
}
