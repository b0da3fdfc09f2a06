// Console bootstrap: wires the gateway connection, the mode-specific input
// path (pointer-as-gaze or touch panel), and the render loop together.

import { clientToScene, PointerSampler, ScenePoint } from './pointer.js';
import { ConsoleMode } from './protocol.js';
import { bannerText, currentTransform, drawScene } from './render.js';
import { applyMessage, ConsoleState, initialState } from './state.js';
import { buildTouchPanel } from './touch.js';
import { GatewayClient } from './ws.js';

function readMode(): ConsoleMode {
    const param = new URLSearchParams(window.location.search).get('mode');
    return param === 'touch' ? 'touch' : 'gaze';
}

function main(): void {
    const mode = readMode();
    const canvas = document.getElementById('scene') as HTMLCanvasElement;
    const ctx = canvas.getContext('2d')!;
    const banner = document.getElementById('banner')!;
    const status = document.getElementById('status')!;
    const modeLabel = document.getElementById('mode')!;
    const cardsRow = document.getElementById('cards')!;
    const metricsRow = document.getElementById('metrics')!;
    modeLabel.textContent = mode === 'gaze' ? 'gaze (pointer)' : 'touch';

    let state: ConsoleState = initialState(mode);

    const wsProto = window.location.protocol === 'https:' ? 'wss' : 'ws';
    const client = new GatewayClient({
        url: `${wsProto}://${window.location.host}/gear`,
        mode,
        name: `console-${mode}`,
        onMessage: (message) => {
            state = applyMessage(state, message, performance.now());
            if (mode === 'touch') {
                panel.refresh(state.partLabels);
            }
        },
        onStatus: (connected, detail) => {
            state = { ...state, connected };
            status.textContent = connected ? 'connected' : `disconnected: ${detail}`;
            status.className = connected ? 'ok' : 'bad';
        },
    });

    // Touch panel exists only in touch mode; the pointer sampler only in
    // gaze mode. Each send path is also type-gated inside the encoder.
    const panel = buildTouchPanel(cardsRow, (label) =>
        client.send('TOUCH_REQUEST', { label, timestamp_us: Math.round(performance.now() * 1000) }),
    );

    let pointerClient: { x: number; y: number } | null = null;
    canvas.addEventListener('pointermove', (event) => {
        const rect = canvas.getBoundingClientRect();
        pointerClient = { x: event.clientX - rect.left, y: event.clientY - rect.top };
    });
    canvas.addEventListener('pointerleave', () => {
        pointerClient = null;
    });

    const getPointer = (): ScenePoint | null => {
        if (pointerClient === null) {
            return null;
        }
        const t = currentTransform(canvas, state);
        if (t === null) {
            return null;
        }
        return clientToScene(t, pointerClient.x, pointerClient.y);
    };

    if (mode === 'gaze') {
        const sampler = new PointerSampler({
            getPointer,
            emit: (sample) => {
                client.send('GAZE_SAMPLE', { ...sample });
            },
        });
        sampler.start();
    }

    client.connect();

    function frame(): void {
        drawScene(ctx, canvas, state, performance.now());
        banner.textContent = bannerText(state);
        if (state.metrics !== null) {
            metricsRow.textContent =
                `requests: ${state.metrics.requests_total}  ` +
                `errors: ${state.metrics.requests_incorrect}  ` +
                `error rate: ${state.metrics.error_rate.toFixed(2)}`;
        }
        requestAnimationFrame(frame);
    }
    requestAnimationFrame(frame);
}

main();
