/// <reference types="vitest" />
import react from "@vitejs/plugin-react";
import { defineConfig } from "vite";

export default defineConfig({
  plugins: [react()],
  server: {
    // dev server proxies to a locally running `avatarlab serve`
    proxy: {
      "^/(health|generate|render|edit|invert|interpolate|avatar|avatars)": {
        target: "http://127.0.0.1:8423",
        changeOrigin: true,
      },
    },
  },
  test: {
    environment: "jsdom",
    setupFiles: ["tests/setup.ts"],
    globals: false,
  },
});
