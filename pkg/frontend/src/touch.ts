// Touch baseline: one card per available part; a tap sends one request.

export interface TouchPanel {
    refresh(labels: string[]): void;
}

export function buildTouchPanel(
    container: HTMLElement,
    onTap: (label: string) => boolean,
): TouchPanel {
    const cards = new Map<string, HTMLButtonElement>();

    function refresh(labels: string[]): void {
        for (const label of labels) {
            if (cards.has(label)) {
                continue;
            }
            const card = document.createElement('button');
            card.className = 'part-card';
            card.textContent = label;
            card.addEventListener('click', () => {
                const sent = onTap(label);
                card.classList.add(sent ? 'pressed' : 'refused');
                setTimeout(() => card.classList.remove('pressed', 'refused'), 250);
            });
            container.appendChild(card);
            cards.set(label, card);
        }
    }

    return { refresh };
}
