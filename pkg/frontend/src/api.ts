import type {
    AnnotationTask,
    ApiErrorBody,
    GtStance,
    LoginResponse,
    QualityCategory,
} from './types.js';

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
    code: string;
    status: number;
    field?: string;

    constructor(status: number, body: ApiErrorBody) {
        super(body.message);
        this.status = status;
        this.code = body.code;
        this.field = body.field;
    }
}

/** Thin client over the annotation endpoints; fetch is injectable for tests. */
export class ApiClient {
    private token: string | null = null;

    constructor(
        private baseUrl: string = '',
        private fetchImpl: FetchLike = (input, init) => fetch(input, init),
    ) {}

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const headers: Record<string, string> = { 'Content-Type': 'application/json' };
        if (this.token) {
            headers['Authorization'] = `Bearer ${this.token}`;
        }
        const response = await this.fetchImpl(this.baseUrl + path, {
            method,
            headers,
            body: body === undefined ? undefined : JSON.stringify(body),
        });
        if (!response.ok) {
            let parsed: ApiErrorBody;
            try {
                parsed = (await response.json()) as ApiErrorBody;
            } catch {
                parsed = { code: 'HttpError', message: `HTTP ${response.status}` };
            }
            throw new ApiError(response.status, parsed);
        }
        return (await response.json()) as T;
    }

    async login(annotatorId: string, accessKey: string): Promise<LoginResponse> {
        const result = await this.request<LoginResponse>('POST', '/api/login', {
            annotator_id: annotatorId,
            access_key: accessKey,
        });
        this.token = result.token;
        return result;
    }

    async nextTask(): Promise<AnnotationTask | null> {
        const result = await this.request<{ task: AnnotationTask | null }>(
            'GET',
            '/api/tasks/next',
        );
        return result.task;
    }

    async submitAnnotation(
        imageId: string,
        selectedLabels: number[],
        comment?: string,
    ): Promise<number> {
        const result = await this.request<{ revision: number }>('POST', '/api/annotations', {
            image_id: imageId,
            selected_labels: selectedLabels,
            comment: comment ?? null,
        });
        return result.revision;
    }

    async postTriage(
        imageId: string,
        qualityCategory: QualityCategory,
        gtStance: GtStance,
    ): Promise<void> {
        await this.request('POST', '/api/triage', {
            image_id: imageId,
            quality_category: qualityCategory,
            gt_stance: gtStance,
        });
    }
}
