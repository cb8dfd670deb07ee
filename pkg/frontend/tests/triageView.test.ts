import { beforeEach, describe, expect, it, vi } from 'vitest';

import { TriageView, type TriageViewHandlers } from '../src/triageView.js';
import { makeTask, mount } from './helpers.js';

function triage(overrides: Partial<TriageViewHandlers> = {}) {
    const container = mount();
    const posted: Array<{ category: string; stance: string }> = [];
    const handlers: TriageViewHandlers = {
        onSubmit: async (category, stance) => {
            posted.push({ category, stance });
        },
        onComplete: () => undefined,
        ...overrides,
    };
    new TriageView(container, makeTask({ stage: 'triage' }), handlers);
    return { container, posted };
}

function pick(container: HTMLElement, name: string, value: string): void {
    const input = container.querySelector<HTMLInputElement>(
        `input[name="${name}"][value="${value}"]`,
    );
    if (!input) {
        throw new Error(`no ${name} option ${value}`);
    }
    input.checked = true;
    input.dispatchEvent(new Event('change'));
}

beforeEach(() => {
    document.body.innerHTML = '';
});

describe('triage screen', () => {
    it('offers the four quality categories and exactly the three stance options', () => {
        const { container } = triage();
        const categories = [
            ...container.querySelectorAll<HTMLInputElement>('input[name="category"]'),
        ].map((i) => i.value);
        expect(categories).toEqual([
            'no_valid_proposal',
            'low_resolution_ambiguous',
            'fine_grained_needs_expert',
            'uncommon_or_atypical_viewpoint',
        ]);
        const stances = [
            ...container.querySelectorAll<HTMLInputElement>('input[name="stance"]'),
        ].map((i) => i.value);
        expect(stances).toEqual(['agree', 'disagree', 'uncertain']);
    });

    it('shows the original ground-truth label for reference', () => {
        const { container } = triage();
        expect(container.querySelector('.original-label')?.textContent).toContain('label 0');
    });

    it('keeps submit disabled until both facets are chosen', () => {
        const { container } = triage();
        const submit = container.querySelector('.submit-button') as HTMLButtonElement;
        expect(submit.disabled).toBe(true);
        pick(container, 'category', 'low_resolution_ambiguous');
        expect(submit.disabled).toBe(true);
        pick(container, 'stance', 'uncertain');
        expect(submit.disabled).toBe(false);
    });

    it('posts the chosen category and stance', async () => {
        const onComplete = vi.fn();
        const { container, posted } = triage({ onComplete });
        pick(container, 'category', 'fine_grained_needs_expert');
        pick(container, 'stance', 'uncertain');
        (container.querySelector('.submit-button') as HTMLElement).click();
        await vi.waitFor(() => expect(posted.length).toBe(1));
        expect(posted[0]).toEqual({
            category: 'fine_grained_needs_expert',
            stance: 'uncertain',
        });
        expect(onComplete).toHaveBeenCalled();
    });

    it('surfaces server rejections without losing the form', async () => {
        const { container } = triage({
            onSubmit: async () => {
                throw new Error('not an experienced annotator');
            },
        });
        pick(container, 'category', 'no_valid_proposal');
        pick(container, 'stance', 'agree');
        (container.querySelector('.submit-button') as HTMLElement).click();
        await vi.waitFor(() => {
            expect(container.querySelector('.validation-message')?.textContent).toContain(
                'not an experienced annotator',
            );
        });
        expect(container.querySelectorAll('input[name="category"]').length).toBe(4);
    });
});
