// Bootstrap: fetch the server's plan/rules/state (gauge thresholds are never
// hard-coded), seed the store, open the live socket, mount the UI.

import { ApiClient } from "./api.js";
import { connectLive } from "./live.js";
import { DashboardStore } from "./store.js";
import { Dashboard } from "./ui.js";

async function start(): Promise<void> {
  const api = new ApiClient("");
  const store = new DashboardStore();

  const [plan, apiState] = await Promise.all([api.plan(), api.state()]);
  store.seed(apiState);

  const root = document.getElementById("app")!;
  const dashboard = new Dashboard(root, store, api, plan);

  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws/live`;
  connectLive(
    wsUrl,
    (event) => {
      store.apply(event);
      if (event.type === "alert") {
        dashboard.toast(event.data);
      }
      dashboard.invalidate();
    },
    (connected) => dashboard.setConnected(connected),
  );
}

window.addEventListener("load", () => {
  start().catch((e) => {
    document.body.textContent = `failed to start dashboard: ${e}`;
  });
});
