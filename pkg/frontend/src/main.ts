import { ApiClient } from './api.js';
import { TaskView } from './taskView.js';
import { TriageView } from './triageView.js';
import type { AnnotationTask } from './types.js';

declare global {
    interface Window {
        RELABELKIT_API?: string;
    }
}

function el<K extends keyof HTMLElementTagNameMap>(
    doc: Document,
    tag: K,
    className: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = doc.createElement(tag);
    node.className = className;
    if (text) {
        node.textContent = text;
    }
    return node;
}

export function startApp(root: HTMLElement, api?: ApiClient): void {
    const client = api ?? new ApiClient(window.RELABELKIT_API ?? '');
    const doc = root.ownerDocument;
    let activeView: TaskView | null = null;

    function renderLogin(message = ''): void {
        root.innerHTML = '';
        const form = el(doc, 'form', 'login-form');
        const annotator = el(doc, 'input', 'login-annotator');
        annotator.placeholder = 'annotator id';
        const key = el(doc, 'input', 'login-key');
        key.type = 'password';
        key.placeholder = 'access key';
        const button = el(doc, 'button', 'login-button', 'Log in');
        button.type = 'submit';
        const error = el(doc, 'div', 'login-error', message);
        form.append(annotator, key, button, error);
        form.addEventListener('submit', (event) => {
            event.preventDefault();
            client
                .login(annotator.value.trim(), key.value)
                .then(() => loadNext())
                .catch((err) => renderLogin((err as Error).message));
        });
        root.appendChild(form);
    }

    function renderDone(): void {
        root.innerHTML = '';
        root.appendChild(
            el(doc, 'p', 'all-done', 'No tasks pending. Thank you!'),
        );
    }

    function renderTask(task: AnnotationTask): void {
        if (activeView) {
            activeView.dispose();
            activeView = null;
        }
        root.innerHTML = '';
        const mount = el(doc, 'div', 'screen');
        root.appendChild(mount);
        if (task.stage === 'triage') {
            new TriageView(mount, task, {
                onSubmit: (category, stance) =>
                    client.postTriage(task.image_id, category, stance),
                onComplete: () => loadNext(),
            });
        } else {
            activeView = new TaskView(mount, task, {
                onSubmit: (labels, comment) =>
                    client.submitAnnotation(task.image_id, labels, comment),
                onComplete: () => loadNext(),
            });
        }
    }

    function loadNext(): void {
        client
            .nextTask()
            .then((task) => (task ? renderTask(task) : renderDone()))
            .catch((err) => renderLogin((err as Error).message));
    }

    renderLogin();
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
    startApp(document.getElementById('app') as HTMLElement);
}
