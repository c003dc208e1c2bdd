import { describe, expect, test } from 'vitest';

import { cssDepthColor, depthColor, normalizeDepths } from '../src/colormap';

describe('depthColor', () => {
  test('endpoints and midpoint are the fixed stops', () => {
    expect(depthColor(0)).toEqual([48, 18, 227]);
    expect(depthColor(0.5)).toEqual([34, 227, 146]);
    expect(depthColor(1)).toEqual([210, 41, 45]);
  });

  test('values between stops interpolate linearly', () => {
    expect(depthColor(0.125)).toEqual([55, 87, 241]);
    expect(depthColor(0.875)).toEqual([218, 131, 50]);
  });

  test('out-of-range inputs clamp to the ends', () => {
    expect(depthColor(-3)).toEqual(depthColor(0));
    expect(depthColor(7)).toEqual(depthColor(1));
  });

  test('css form wraps the same channels', () => {
    expect(cssDepthColor(0)).toBe('rgb(48, 18, 227)');
  });
});

describe('normalizeDepths', () => {
  test('min-max maps onto [0, 1]', () => {
    expect(normalizeDepths([2, 4, 6])).toEqual([0, 0.5, 1]);
  });

  test('constant depth maps to mid-ramp', () => {
    expect(normalizeDepths([5, 5, 5])).toEqual([0.5, 0.5, 0.5]);
  });

  test('empty input stays empty', () => {
    expect(normalizeDepths([])).toEqual([]);
  });
});
