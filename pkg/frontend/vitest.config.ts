import { defineConfig } from "vitest/config";

// every test drives a real engine subprocess, so budgets are generous
export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 120_000,
    hookTimeout: 60_000,
  },
});
