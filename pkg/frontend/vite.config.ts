/// <reference types="vitest/config" />
import { defineConfig } from "vite";

// Analysis endpoints proxy to the Python service during development;
// the built bundle expects to be served from the same origin instead.
const SERVICE = `http://127.0.0.1:${process.env.PSYCHOFORGE_PORT ?? "8090"}`;

const proxy = {
  "/datasets": SERVICE,
  "/analysis": SERVICE,
  "/modules": SERVICE,
  "/schemas": SERVICE,
};

export default defineConfig({
  server: { proxy },
  preview: { proxy },
  test: {
    environment: "happy-dom",
    include: ["tests/**/*.test.ts"],
  },
});
