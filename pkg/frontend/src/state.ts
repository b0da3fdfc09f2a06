// Console state: a pure reducer over inbound messages. The console never
// invents state; every label, phase, and banner string shown comes from a
// received message.

import type { ConsoleMode, WireMessage } from './protocol.js';

export interface PartView {
    label: string;
    zone: string;
    assembled: boolean;
    bbox: { x_min: number; y_min: number; x_max: number; y_max: number };
}

export interface SceneSnapshot {
    timestamp_us: number;
    snapshot_seq: number;
    clock_s: number;
    phase: string;
    robot: { x_px: number; y_px: number };
    parts: PartView[];
    zones_px: Record<string, number[]>;
    delivered: string[];
    assembled: string[];
    frame_width: number;
    frame_height: number;
}

export interface AnnouncementView {
    kind: string;
    text: string;
    timestamp_us: number;
}

export interface MetricsView {
    requests_total: number;
    requests_incorrect: number;
    error_rate: number;
    completion_time_s: number;
}

export const ANNOUNCEMENT_RING = 5;
export const STALE_AFTER_MS = 2000;

export interface ConsoleState {
    mode: ConsoleMode;
    connected: boolean;
    planId: string | null;
    partLabels: string[];
    snapshot: SceneSnapshot | null;
    snapshotSeq: number;
    lastSnapshotAtMs: number;
    phase: string;
    announcements: AnnouncementView[];
    metrics: MetricsView | null;
    warnings: string[];
}

export function initialState(mode: ConsoleMode): ConsoleState {
    return {
        mode,
        connected: false,
        planId: null,
        partLabels: [],
        snapshot: null,
        snapshotSeq: -1,
        lastSnapshotAtMs: 0,
        phase: 'IDLE',
        announcements: [],
        metrics: null,
        warnings: [],
    };
}

export function applyMessage(
    state: ConsoleState,
    message: WireMessage,
    nowMs: number,
): ConsoleState {
    switch (message.type) {
        case 'CONFIG': {
            const plan = message.payload.plan as
                | { plan_id?: string; steps?: { part_label: string }[] }
                | undefined;
            return {
                ...state,
                planId: plan?.plan_id ?? state.planId,
                partLabels: plan?.steps?.map((s) => s.part_label) ?? state.partLabels,
            };
        }
        case 'SCENE_SNAPSHOT': {
            const snapshot = message.payload as unknown as SceneSnapshot;
            if (snapshot.snapshot_seq <= state.snapshotSeq) {
                // Out-of-order snapshot: stale data never overwrites newer.
                return {
                    ...state,
                    warnings: pushWarning(
                        state.warnings,
                        `ignored snapshot seq regression (${snapshot.snapshot_seq} <= ${state.snapshotSeq})`,
                    ),
                };
            }
            return {
                ...state,
                snapshot,
                snapshotSeq: snapshot.snapshot_seq,
                lastSnapshotAtMs: nowMs,
                phase: snapshot.phase,
            };
        }
        case 'ANNOUNCEMENT': {
            const announcement = message.payload as unknown as AnnouncementView;
            const announcements = [...state.announcements, announcement];
            while (announcements.length > ANNOUNCEMENT_RING) {
                announcements.shift();
            }
            return { ...state, announcements };
        }
        case 'ROBOT_STATE': {
            if ('event' in message.payload) {
                return state; // world events are engine input, not display state
            }
            const phase = message.payload.phase;
            return typeof phase === 'string' ? { ...state, phase } : state;
        }
        case 'METRICS': {
            return { ...state, metrics: message.payload as unknown as MetricsView };
        }
        case 'FAULT': {
            const reason = String(message.payload.reason ?? 'unknown fault');
            return { ...state, warnings: pushWarning(state.warnings, reason) };
        }
        default:
            return state;
    }
}

function pushWarning(warnings: string[], text: string): string[] {
    const next = [...warnings, text];
    while (next.length > 20) {
        next.shift();
    }
    return next;
}

export function latestAnnouncement(state: ConsoleState): AnnouncementView | null {
    return state.announcements.length > 0
        ? state.announcements[state.announcements.length - 1]
        : null;
}

export function snapshotIsStale(state: ConsoleState, nowMs: number): boolean {
    if (state.snapshot === null) {
        return true;
    }
    return nowMs - state.lastSnapshotAtMs > STALE_AFTER_MS;
}
