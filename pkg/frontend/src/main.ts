import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";
import { SessionController, Store } from "./state.js";

const root = document.getElementById("app");
if (root === null) {
  throw new Error("missing #app container");
}
const base = new URLSearchParams(window.location.search).get("api") ?? "";
const controller = new SessionController(new ApiClient(base), new Store());
mountApp(root, controller);
