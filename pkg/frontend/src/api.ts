// Typed client for the schemaplan session service. Every piece of state the
// console renders comes back from these calls; nothing is fabricated locally.

export interface ReferenceAddress {
  owner: string;
  span: [number, number];
}

export interface Candidate {
  id: string;
  kind: string;
  reference: { owner: string; span: number[] };
  description: string;
}

export interface PendingReference {
  key: string;
  parent: string;
  subset: string;
  status: "pending" | "decided";
  chosen: string | null;
  candidates: Candidate[];
  reference: { owner: string; span: number[] } | null;
}

export interface TreeNode {
  id: string;
  kind: string;
  label: string;
  status: "pending" | "decided";
  references: PendingReference[];
  children: TreeNode[];
}

export interface Tree {
  session: string;
  closed: boolean;
  pending: number;
  roots: TreeNode[];
}

export interface ReferenceDetail {
  key: string;
  subset: string;
  status: "pending" | "decided";
  chosen: string | null;
  candidates: Candidate[];
  actionable?: string;
  source?: string;
  highlight?: [number, number];
}

export interface SimulationReport {
  clean: boolean;
  statements: number;
  violations: { statement: number; sql: string; message: string }[];
}

export interface PatchResult {
  sql: string;
  statements: { verb: string; phase: string; actionable: string; text: string; operators: string[] }[];
  report: SimulationReport;
}

export interface OperatorSpec {
  op: string;
  target?: string;
  reference?: { owner: string; span: number[] };
  args?: Record<string, unknown>;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

async function parseError(resp: Response): Promise<never> {
  let code = "error";
  let message = resp.statusText;
  try {
    const body = await resp.json();
    code = body.code ?? code;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, code, message);
}

export class ApiClient {
  constructor(private readonly base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await fetch(this.base + path, {
      method,
      headers: body === undefined ? {} : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!resp.ok) {
      await parseError(resp);
    }
    if (resp.status === 204) {
      return undefined as T;
    }
    return (await resp.json()) as T;
  }

  createSession(dump: string, autoAcceptSingle: boolean): Promise<{ id: string; pending: number }> {
    return this.request("POST", "/sessions", { dump, auto_accept_single: autoAcceptSingle });
  }

  addOperators(sessionId: string, operators: OperatorSpec[]): Promise<Tree> {
    return this.request("POST", `/sessions/${sessionId}/operators`, operators);
  }

  tree(sessionId: string): Promise<Tree> {
    return this.request("GET", `/sessions/${sessionId}/tree`);
  }

  recommendations(sessionId: string, refKey: string): Promise<ReferenceDetail> {
    return this.request(
      "GET",
      `/sessions/${sessionId}/references/${encodeURIComponent(refKey)}/recommendations`,
    );
  }

  decide(sessionId: string, reference: ReferenceAddress, recommendation: string): Promise<Tree> {
    return this.request("POST", `/sessions/${sessionId}/decisions`, { reference, recommendation });
  }

  removeOperator(sessionId: string, opId: string): Promise<Tree> {
    return this.request("DELETE", `/sessions/${sessionId}/operators/${opId}`);
  }

  patch(sessionId: string, commit = false): Promise<PatchResult> {
    return this.request("POST", `/sessions/${sessionId}/patch`, { commit });
  }
}
