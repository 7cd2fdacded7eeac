// Browser entry point. Wires the real fetch, localStorage, and the online
// event into the app; everything else is testable without a browser.

import { ArenaClient } from "./api.js";
import { AnnotationApp } from "./app.js";
import { VoteQueue } from "./queue.js";

const root = document.getElementById("app");
if (!root) {
  throw new Error("missing #app mount point");
}

const client = new ArenaClient("");
const queue = new VoteQueue(window.localStorage);
const app = new AnnotationApp(root, client, queue);

window.addEventListener("online", () => {
  void queue.flush((vote) => client.submitVote(vote));
});

app.start();
