import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    // the contract test synthesizes a scene and boots the backend
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
