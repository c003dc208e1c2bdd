import { ApiClient } from './api.js';
import { createApp } from './app.js';
import { toast } from './toast.js';

const root = document.getElementById('app');
if (root) {
  createApp(root, new ApiClient()).catch((err) => {
    toast(`failed to start: ${(err as Error).message}`, 'error', 60000);
  });
}
