import { defineConfig } from 'vite';

export default defineConfig({
  build: { outDir: 'dist' },
  test: {
    environment: 'node',
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
