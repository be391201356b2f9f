import { defineConfig } from "vitest/config";

// The triage service serves index.html at "/" but mounts the static assets
// under "/ui", so built asset URLs must start with /ui/.
const API_ROUTES = ["/sections", "/clusters", "/labels", "/recompute"];

export default defineConfig({
  base: "/ui/",
  build: {
    outDir: "dist",
  },
  server: {
    proxy: Object.fromEntries(
      API_ROUTES.map((route) => [route, "http://127.0.0.1:8710"]),
    ),
  },
  test: {
    environment: "node",
  },
});
