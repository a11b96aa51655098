import { ServiceClient } from "./api.js";
import { ChatStore } from "./store.js";
import { mountChatView } from "./view.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("service") ?? "http://127.0.0.1:8000";
const situation = params.get("situation") ?? "water-cooler";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app element");

  const client = new ServiceClient(baseUrl);
  const store = new ChatStore(client);

  const cards = await client.listCompanions();
  const participants = params.get("participants")?.split(",") ?? cards.map((c) => c.name);
  await store.start(situation, participants);
  mountChatView(root, store);

  const stream = client.eventStream(store.chatId);
  window.addEventListener("beforeunload", () => stream.close());
  void store.pump(stream.events());
}

boot().catch((error) => {
  const root = document.getElementById("app");
  if (root) root.textContent = `failed to start: ${error}`;
});
