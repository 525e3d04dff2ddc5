import { DiagnosisClient } from "./api.js";
import { createApp } from "./app.js";

// The service origin can be overridden with ?api=http://host:port when the
// static files are not served by the service host itself.
const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.location.origin;

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app element");
}
createApp(root, new DiagnosisClient(base));
