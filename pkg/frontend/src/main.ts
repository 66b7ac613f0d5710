import { mount } from "./ui";

const params = new URLSearchParams(window.location.search);
const baseUrl =
  params.get("service") ?? (window as any).RELIGHT_SERVICE_URL ?? "http://127.0.0.1:8765";

window.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");
  const app = mount(root, baseUrl);
  void app.init();
});
