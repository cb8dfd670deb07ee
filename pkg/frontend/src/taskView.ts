import {
    handleKey,
    initState,
    selectedLabels,
    setActiveGroup,
    submitBlocker,
    toggleLabel,
    type ScreenState,
} from './state.js';
import type { AnnotationTask } from './types.js';

export interface TaskViewHandlers {
    onSubmit: (labels: number[], comment?: string) => Promise<number>;
    onComplete: (revision: number) => void;
}

const PLACEHOLDER_CLASS = 'placeholder-tile';

function showModal(root: HTMLElement, uri: string): void {
    const existing = root.querySelector('.image-modal');
    if (existing) {
        existing.remove();
    }
    const overlay = root.ownerDocument.createElement('div');
    overlay.className = 'image-modal';
    const full = root.ownerDocument.createElement('img');
    full.className = 'image-modal-content';
    full.src = uri;
    overlay.appendChild(full);
    overlay.addEventListener('click', () => overlay.remove());
    root.appendChild(overlay);
}

function exemplarTile(doc: Document, uri: string, root: HTMLElement): HTMLElement {
    const img = doc.createElement('img');
    img.className = 'exemplar';
    img.src = uri;
    img.loading = 'lazy';
    img.addEventListener('click', () => showModal(root, uri));
    img.addEventListener('error', () => {
        const placeholder = doc.createElement('div');
        placeholder.className = `exemplar ${PLACEHOLDER_CLASS}`;
        placeholder.title = 'image unavailable';
        img.replaceWith(placeholder);
    });
    return img;
}

/** The annotation screen: target image, label groups of five with one
 *  checkbox and ten exemplar thumbnails per label, comment box, submit. */
export class TaskView {
    readonly state: ScreenState;
    private keyListener: (event: KeyboardEvent) => void;

    constructor(
        private container: HTMLElement,
        task: AnnotationTask,
        private handlers: TaskViewHandlers,
    ) {
        this.state = initState(task);
        this.keyListener = (event) => {
            const target = event.target as HTMLElement | null;
            if (target && target.tagName === 'TEXTAREA') {
                return;
            }
            if (handleKey(this.state, event.key)) {
                this.render();
            }
        };
        container.ownerDocument.addEventListener('keydown', this.keyListener);
        this.render();
    }

    dispose(): void {
        this.container.ownerDocument.removeEventListener('keydown', this.keyListener);
        this.container.innerHTML = '';
    }

    render(): void {
        const doc = this.container.ownerDocument;
        const { task } = this.state;
        this.container.innerHTML = '';

        const header = doc.createElement('div');
        header.className = 'task-header';
        const stageBadge = doc.createElement('span');
        stageBadge.className = `stage-badge stage-${task.stage}`;
        stageBadge.textContent = task.stage;
        const progress = doc.createElement('span');
        progress.className = 'progress-indicator';
        progress.textContent = `${task.progress.done} / ${task.progress.total}`;
        header.append(stageBadge, progress);
        this.container.appendChild(header);

        const target = doc.createElement('img');
        target.className = 'target-image';
        target.src = task.image_uri;
        target.addEventListener('click', () => showModal(this.container, task.image_uri));
        this.container.appendChild(target);

        const tabs = doc.createElement('nav');
        tabs.className = 'group-tabs';
        task.groups.forEach((_, index) => {
            const tab = doc.createElement('button');
            tab.type = 'button';
            tab.className = 'group-tab' + (index === this.state.activeGroup ? ' active' : '');
            tab.dataset.group = String(index);
            tab.textContent = `Group ${index + 1}`;
            tab.addEventListener('click', () => {
                setActiveGroup(this.state, index);
                this.render();
            });
            tabs.appendChild(tab);
        });
        this.container.appendChild(tabs);

        const groupBox = doc.createElement('div');
        groupBox.className = 'label-group';
        for (const entry of task.groups[this.state.activeGroup] ?? []) {
            const row = doc.createElement('div');
            row.className = 'label-row';

            const checkbox = doc.createElement('input');
            checkbox.type = 'checkbox';
            checkbox.className = 'label-checkbox';
            checkbox.dataset.classId = String(entry.class_id);
            checkbox.checked = this.state.selected.has(entry.class_id);
            checkbox.addEventListener('change', () => {
                toggleLabel(this.state, entry.class_id);
                this.updateValidation('');
            });

            const text = doc.createElement('div');
            text.className = 'label-text';
            const name = doc.createElement('div');
            name.className = 'label-name';
            name.textContent = entry.name;
            const synonyms = doc.createElement('div');
            synonyms.className = 'label-synonyms';
            synonyms.textContent = entry.synonyms.join(', ');
            text.append(name, synonyms);

            const strip = doc.createElement('div');
            strip.className = 'exemplar-strip';
            for (const uri of entry.exemplars) {
                strip.appendChild(exemplarTile(doc, uri, this.container));
            }

            row.append(checkbox, text, strip);
            groupBox.appendChild(row);
        }
        this.container.appendChild(groupBox);

        const comment = doc.createElement('textarea');
        comment.className = 'comment-input';
        comment.placeholder =
            task.stage === 'refinement'
                ? 'Document any change to the pre-checked labels'
                : 'Optional comment';
        comment.value = this.state.comment;
        comment.addEventListener('input', () => {
            this.state.comment = comment.value;
        });
        this.container.appendChild(comment);

        const validation = doc.createElement('div');
        validation.className = 'validation-message';
        this.container.appendChild(validation);

        const actions = doc.createElement('div');
        actions.className = 'actions';
        const submit = doc.createElement('button');
        submit.type = 'button';
        submit.className = 'submit-button';
        submit.textContent = 'Submit';
        submit.addEventListener('click', () => void this.trySubmit());
        actions.appendChild(submit);
        this.container.appendChild(actions);
    }

    private updateValidation(message: string): void {
        const box = this.container.querySelector('.validation-message');
        if (box) {
            box.textContent = message;
            box.querySelectorAll('button').forEach((b) => b.remove());
        }
    }

    private async trySubmit(): Promise<void> {
        const blocker = submitBlocker(this.state);
        if (blocker === 'comment_required') {
            this.updateValidation(
                'You changed the pre-checked labels: a comment describing the change is required.',
            );
            return;
        }
        if (blocker === 'confirm_empty') {
            this.showEmptyConfirm();
            return;
        }
        await this.send();
    }

    private showEmptyConfirm(): void {
        const doc = this.container.ownerDocument;
        const box = this.container.querySelector('.validation-message');
        if (!box) {
            return;
        }
        box.textContent = 'No labels selected. Submit this image with an empty label set?';
        const confirm = doc.createElement('button');
        confirm.type = 'button';
        confirm.className = 'confirm-empty';
        confirm.textContent = 'Yes, no valid label applies';
        confirm.addEventListener('click', () => {
            this.state.emptyConfirmed = true;
            void this.send();
        });
        box.appendChild(confirm);
    }

    private async send(): Promise<void> {
        const labels = selectedLabels(this.state);
        const comment = this.state.comment.trim() || undefined;
        const submit = this.container.querySelector<HTMLButtonElement>('.submit-button');
        if (submit) {
            submit.disabled = true;
        }
        try {
            const revision = await this.handlers.onSubmit(labels, comment);
            this.handlers.onComplete(revision);
        } catch (error) {
            // Draft stays in state; offer a retry instead of losing work.
            if (submit) {
                submit.disabled = false;
            }
            const doc = this.container.ownerDocument;
            const box = this.container.querySelector('.validation-message');
            if (box) {
                box.textContent = `Submission failed (${(error as Error).message}).`;
                const retry = doc.createElement('button');
                retry.type = 'button';
                retry.className = 'retry-button';
                retry.textContent = 'Retry';
                retry.addEventListener('click', () => void this.send());
                box.appendChild(retry);
            }
        }
    }
}
