import type { AnnotationTask, ProposalEntry, TaskStage } from '../src/types.js';

export function makeTask(options: {
    stage?: TaskStage;
    nLabels?: number;
    prechecked?: number[];
    done?: number;
    total?: number;
} = {}): AnnotationTask {
    const { stage = 'initial', nLabels = 20, prechecked = [], done = 3, total = 40 } = options;
    const groups: ProposalEntry[][] = [];
    for (let i = 0; i < nLabels; i += 1) {
        if (i % 5 === 0) {
            groups.push([]);
        }
        groups[groups.length - 1].push({
            class_id: 100 + i,
            name: `label ${i}`,
            synonyms: [`label ${i} (alt)`],
            exemplars: Array.from(
                { length: 10 },
                (_, j) => `https://img.example/${100 + i}/${j}.jpg`,
            ),
            prechecked: prechecked.includes(100 + i),
        });
    }
    return {
        image_id: 'img_0001',
        image_uri: 'https://img.example/items/img_0001.jpg',
        stage,
        groups,
        original_label: { class_id: 100, name: 'label 0' },
        progress: { done, total },
    };
}

export function mount(): HTMLElement {
    const container = document.createElement('div');
    document.body.appendChild(container);
    return container;
}
