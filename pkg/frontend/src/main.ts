import { CaptchaWidget } from "./app.js";

document.addEventListener("DOMContentLoaded", () => {
  const root = document.getElementById("captcha");
  if (!root) throw new Error("missing #captcha mount point");
  const widget = new CaptchaWidget(root, window.fetch.bind(window));
  void widget.load();
});
