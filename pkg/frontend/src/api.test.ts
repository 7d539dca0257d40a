import { afterEach, describe, expect, it, vi } from 'vitest';
import {
  ServiceError,
  createSession,
  finishSession,
  getCatalog,
  getNext,
  getSession,
  postAnswer,
} from './api.js';

function mockFetch(status: number, body: unknown) {
  const fn = vi.fn(async () => ({
    ok: status >= 200 && status < 300,
    status,
    json: async () => body,
  }));
  vi.stubGlobal('fetch', fn);
  return fn;
}

afterEach(() => {
  vi.unstubAllGlobals();
});

describe('request plumbing', () => {
  it('getCatalog hits /v1/catalog', async () => {
    const fn = mockFetch(200, { concepts: [], labels: [] });
    await getCatalog();
    expect(fn).toHaveBeenCalledWith('/v1/catalog', undefined);
  });

  it('createSession posts JSON to /v1/sessions', async () => {
    const fn = mockFetch(200, { session_id: 's1' });
    const res = await createSession({
      instance_id: 'test-0001',
      policy: 'coop',
      budget: 5,
      cost_model: 'unit',
    });
    expect(res.session_id).toBe('s1');
    const [url, init] = fn.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe('/v1/sessions');
    expect(init.method).toBe('POST');
    expect(JSON.parse(init.body as string)).toEqual({
      instance_id: 'test-0001',
      policy: 'coop',
      budget: 5,
      cost_model: 'unit',
    });
  });

  it('session routes embed the session id', async () => {
    const fn = mockFetch(200, {});
    await getSession('abc');
    await getNext('abc');
    await finishSession('abc');
    const urls = fn.mock.calls.map((c) => (c as unknown as [string])[0]);
    expect(urls).toEqual([
      '/v1/sessions/abc',
      '/v1/sessions/abc/next',
      '/v1/sessions/abc/finish',
    ]);
  });

  it('postAnswer sends concept and value', async () => {
    const fn = mockFetch(200, {});
    await postAnswer('abc', 'c2', 3);
    const [url, init] = fn.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe('/v1/sessions/abc/answer');
    expect(JSON.parse(init.body as string)).toEqual({ concept: 'c2', value: 3 });
  });

  it('non-2xx responses raise ServiceError with the payload', async () => {
    mockFetch(409, { code: 'session_finished', message: 'already finished' });
    const err = await getNext('abc').catch((e: unknown) => e);
    expect(err).toBeInstanceOf(ServiceError);
    const se = err as ServiceError;
    expect(se.status).toBe(409);
    expect(se.payload.code).toBe('session_finished');
    expect(se.message).toBe('already finished');
  });
});
