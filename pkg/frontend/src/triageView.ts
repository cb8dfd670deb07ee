import {
    GT_STANCES,
    QUALITY_CATEGORIES,
    type AnnotationTask,
    type GtStance,
    type QualityCategory,
} from './types.js';

export interface TriageViewHandlers {
    onSubmit: (category: QualityCategory, stance: GtStance) => Promise<void>;
    onComplete: () => void;
}

const CATEGORY_TEXT: Record<QualityCategory, string> = {
    no_valid_proposal: 'Clear image, but none of the proposed labels fit',
    low_resolution_ambiguous: 'Too low-resolution or ambiguous to label',
    fine_grained_needs_expert: 'Fine-grained distinction, needs an expert',
    uncommon_or_atypical_viewpoint: 'Uncommon object or atypical viewpoint',
};

const STANCE_TEXT: Record<GtStance, string> = {
    agree: 'I agree with the original label',
    disagree: 'I disagree with the original label',
    uncertain: 'I am uncertain about the original label',
};

function radioGroup(
    doc: Document,
    name: string,
    options: readonly string[],
    labels: Record<string, string>,
    onChange: () => void,
): HTMLElement {
    const box = doc.createElement('fieldset');
    box.className = `radio-group ${name}-group`;
    for (const option of options) {
        const label = doc.createElement('label');
        label.className = 'radio-option';
        const input = doc.createElement('input');
        input.type = 'radio';
        input.name = name;
        input.value = option;
        input.addEventListener('change', onChange);
        label.append(input, doc.createTextNode(labels[option] ?? option));
        box.appendChild(label);
    }
    return box;
}

/** Zero-label triage form: one quality category, one stance toward the
 *  original ground-truth label (shown for reference). Submit stays
 *  disabled until both are chosen. */
export class TriageView {
    constructor(
        private container: HTMLElement,
        private task: AnnotationTask,
        private handlers: TriageViewHandlers,
    ) {
        this.render();
    }

    private selection(): { category: QualityCategory | null; stance: GtStance | null } {
        const category = this.container.querySelector<HTMLInputElement>(
            'input[name="category"]:checked',
        );
        const stance = this.container.querySelector<HTMLInputElement>(
            'input[name="stance"]:checked',
        );
        return {
            category: (category?.value as QualityCategory) ?? null,
            stance: (stance?.value as GtStance) ?? null,
        };
    }

    render(): void {
        const doc = this.container.ownerDocument;
        this.container.innerHTML = '';

        const target = doc.createElement('img');
        target.className = 'target-image';
        target.src = this.task.image_uri;
        this.container.appendChild(target);

        const original = doc.createElement('p');
        original.className = 'original-label';
        original.textContent = `Original ground-truth label: ${this.task.original_label.name}`;
        this.container.appendChild(original);

        const refresh = () => {
            const { category, stance } = this.selection();
            const submit = this.container.querySelector<HTMLButtonElement>('.submit-button');
            if (submit) {
                submit.disabled = category === null || stance === null;
            }
        };

        this.container.appendChild(
            radioGroup(doc, 'category', QUALITY_CATEGORIES, CATEGORY_TEXT, refresh),
        );
        this.container.appendChild(radioGroup(doc, 'stance', GT_STANCES, STANCE_TEXT, refresh));

        const validation = doc.createElement('div');
        validation.className = 'validation-message';
        this.container.appendChild(validation);

        const submit = doc.createElement('button');
        submit.type = 'button';
        submit.className = 'submit-button';
        submit.textContent = 'Submit triage';
        submit.disabled = true;
        submit.addEventListener('click', () => void this.send());
        this.container.appendChild(submit);
    }

    private async send(): Promise<void> {
        const { category, stance } = this.selection();
        if (category === null || stance === null) {
            return;
        }
        try {
            await this.handlers.onSubmit(category, stance);
            this.handlers.onComplete();
        } catch (error) {
            const box = this.container.querySelector('.validation-message');
            if (box) {
                box.textContent = `Submission failed (${(error as Error).message}).`;
            }
        }
    }
}
