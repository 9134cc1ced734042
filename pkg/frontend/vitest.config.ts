import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['tests/**/*.test.ts'],
    // The e2e suite spawns the Python service and waits for it to bind.
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
