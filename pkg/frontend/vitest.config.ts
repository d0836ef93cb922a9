import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // parity tests spawn the CLI a few hundred times
    testTimeout: 120_000,
  },
});
