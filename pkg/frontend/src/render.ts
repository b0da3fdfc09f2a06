// Canvas rendering of the live user view: zone outlines, part boxes, the
// robot marker, and status chrome. Everything drawn originates from
// received messages held in ConsoleState.

import { fitFrame, ViewTransform } from './pointer.js';
import { ConsoleState, latestAnnouncement, snapshotIsStale } from './state.js';

const ZONE_COLORS: Record<string, string> = {
    ROBOT_WORKSPACE: '#355070',
    SHARED: '#6d597a',
    USER_STATION: '#b56576',
};

const PHASE_COLORS: Record<string, string> = {
    IDLE: '#4a4e69',
    ANNOUNCING: '#e29578',
    RETRIEVING: '#e56b6f',
    DELIVERING: '#eaac8b',
    RETURNING: '#6d597a',
};

export function currentTransform(
    canvas: { width: number; height: number },
    state: ConsoleState,
): ViewTransform | null {
    if (state.snapshot === null) {
        return null;
    }
    return fitFrame(
        canvas.width,
        canvas.height,
        state.snapshot.frame_width,
        state.snapshot.frame_height,
    );
}

export function drawScene(
    ctx: CanvasRenderingContext2D,
    canvas: { width: number; height: number },
    state: ConsoleState,
    nowMs: number,
): void {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = '#14141c';
    ctx.fillRect(0, 0, canvas.width, canvas.height);

    const snapshot = state.snapshot;
    const t = currentTransform(canvas, state);
    if (snapshot === null || t === null) {
        ctx.fillStyle = '#ccc';
        ctx.font = '16px sans-serif';
        ctx.fillText('waiting for scene snapshot…', 20, 40);
        return;
    }

    const toX = (x: number) => t.offsetX + x * t.scale;
    const toY = (y: number) => t.offsetY + y * t.scale;

    for (const [zone, rect] of Object.entries(snapshot.zones_px)) {
        ctx.strokeStyle = ZONE_COLORS[zone] ?? '#666';
        ctx.lineWidth = 1.5;
        ctx.strokeRect(
            toX(rect[0]),
            toY(rect[1]),
            (rect[2] - rect[0]) * t.scale,
            (rect[3] - rect[1]) * t.scale,
        );
        ctx.fillStyle = '#8888aa';
        ctx.font = '11px sans-serif';
        ctx.fillText(zone, toX(rect[0]) + 4, toY(rect[1]) + 14);
    }

    for (const part of snapshot.parts) {
        const { x_min, y_min, x_max, y_max } = part.bbox;
        ctx.strokeStyle = part.assembled ? '#4d8a57' : '#e0c36e';
        ctx.lineWidth = 2;
        ctx.strokeRect(
            toX(x_min),
            toY(y_min),
            (x_max - x_min) * t.scale,
            (y_max - y_min) * t.scale,
        );
        ctx.fillStyle = '#eee';
        ctx.font = '12px sans-serif';
        ctx.fillText(part.label, toX(x_min), toY(y_min) - 4);
    }

    // Robot marker; the gateway interpolates its position along the fetch
    // legs, so redrawing per snapshot animates the move between zones.
    ctx.beginPath();
    ctx.arc(toX(snapshot.robot.x_px), toY(snapshot.robot.y_px), 9, 0, Math.PI * 2);
    ctx.fillStyle = PHASE_COLORS[state.phase] ?? '#999';
    ctx.fill();
    ctx.strokeStyle = '#fff';
    ctx.stroke();

    ctx.fillStyle = '#ddd';
    ctx.font = '13px sans-serif';
    ctx.fillText(`phase: ${state.phase}`, 12, canvas.height - 32);
    ctx.fillText(`clock: ${snapshot.clock_s.toFixed(1)} s`, 12, canvas.height - 14);

    if (snapshotIsStale(state, nowMs)) {
        ctx.fillStyle = '#e56b6f';
        ctx.font = 'bold 14px sans-serif';
        ctx.fillText('STALE SNAPSHOT', canvas.width - 150, 24);
    }
}

export function bannerText(state: ConsoleState): string {
    const announcement = latestAnnouncement(state);
    if (announcement === null) {
        return '';
    }
    // Shown verbatim: the banner is the engine's voice, never paraphrased.
    return announcement.text;
}
