/** DOM construction and rendering. Plain elements, no framework; every
 * pixel displayed arrives as bytes from the service. */

import { ReferenceEntry, ServiceClient } from "./api";
import { EnhanceResult, Session } from "./state";

export function bytesToImageUrl(bytes: ArrayBuffer): string {
  const blob = new Blob([bytes], { type: "image/png" });
  if (typeof URL !== "undefined" && typeof URL.createObjectURL === "function") {
    return URL.createObjectURL(blob);
  }
  // fallback for environments without object URLs (e.g. jsdom)
  let binary = "";
  for (const b of new Uint8Array(bytes)) binary += String.fromCharCode(b);
  return `data:image/png;base64,${btoa(binary)}`;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

export class App {
  readonly root: HTMLElement;
  private preview: HTMLImageElement;
  private uploadMessage: HTMLElement;
  private gallery: HTMLElement;
  private banner: HTMLElement;
  private errorBox: HTMLElement;
  private strip: HTMLElement;
  private references: ReferenceEntry[] = [];

  constructor(
    root: HTMLElement,
    readonly session: Session,
    private readonly client: ServiceClient,
  ) {
    this.root = root;
    root.innerHTML = "";

    this.banner = el("div", "banner hidden");
    this.banner.id = "service-banner";
    this.banner.append(el("span", "banner-text", "service unreachable"));
    const retry = el("button", "retry", "Retry");
    retry.id = "retry-button";
    retry.addEventListener("click", () => void this.retry());
    this.banner.append(retry);

    const upload = el("section", "upload-panel");
    upload.id = "upload-panel";
    upload.append(el("h2", undefined, "Low-light image"));
    const fileInput = el("input") as HTMLInputElement;
    fileInput.type = "file";
    fileInput.accept = "image/*";
    fileInput.id = "low-input";
    fileInput.addEventListener("change", () => {
      const file = fileInput.files?.[0];
      if (file) this.handleUpload(file);
    });
    this.preview = el("img", "preview") as HTMLImageElement;
    this.preview.id = "low-preview";
    this.preview.classList.add("hidden");
    this.uploadMessage = el("div", "message");
    this.uploadMessage.id = "upload-message";
    upload.append(fileInput, this.uploadMessage, this.preview);

    const gallerySection = el("section", "gallery-panel");
    gallerySection.append(el("h2", undefined, "References (dark to bright)"));
    this.gallery = el("div", "gallery");
    this.gallery.id = "reference-gallery";
    gallerySection.append(this.gallery);

    const customRef = el("input") as HTMLInputElement;
    customRef.type = "file";
    customRef.accept = "image/*";
    customRef.id = "custom-ref-input";
    customRef.addEventListener("change", () => {
      const file = customRef.files?.[0];
      if (file) this.handleCustomRef(file);
    });
    const customLabel = el("label", "custom-ref", "Custom reference: ");
    customLabel.append(customRef);
    gallerySection.append(customLabel);

    const stripSection = el("section", "compare-panel");
    stripSection.append(el("h2", undefined, "Enhanced versions (by brightness)"));
    this.strip = el("div", "compare-strip");
    this.strip.id = "compare-strip";
    const clear = el("button", "clear", "Clear session");
    clear.id = "clear-button";
    clear.addEventListener("click", () => this.session.clear());
    stripSection.append(this.strip, clear);

    this.errorBox = el("div", "error hidden");
    this.errorBox.id = "error-box";

    root.append(this.banner, this.errorBox, upload, gallerySection, stripSection);
    session.onChange(() => this.render());
  }

  async init(): Promise<void> {
    try {
      this.references = await this.client.references();
      this.session.serviceDown = false;
    } catch {
      this.session.markServiceDown();
    }
    this.renderGallery();
    this.render();
  }

  async retry(): Promise<void> {
    const ok = await this.session.retryService();
    if (ok) await this.init();
  }

  handleUpload(file: File): void {
    if (!file.type.startsWith("image/")) {
      this.uploadMessage.textContent = `"${file.name}" is not an image file`;
      return;
    }
    this.uploadMessage.textContent = "";
    this.session.setLow(file.name, file);
    const reader = new FileReader();
    reader.onload = () => {
      this.preview.src = String(reader.result);
      this.preview.classList.remove("hidden");
    };
    reader.readAsDataURL(file);
  }

  handleCustomRef(file: File): void {
    if (!file.type.startsWith("image/")) {
      this.uploadMessage.textContent = `"${file.name}" is not an image file`;
      return;
    }
    void this.session.requestEnhance({ refFile: file }, `custom:${file.name}`, null);
  }

  clickReference(entry: ReferenceEntry): void {
    void this.session.requestEnhance(
      { refId: entry.id },
      entry.id,
      `data:image/png;base64,${entry.thumbnail_png_base64}`,
    );
  }

  renderGallery(): void {
    this.gallery.innerHTML = "";
    if (this.references.length === 0) {
      const empty = el("div", "placeholder", "no references");
      empty.id = "gallery-placeholder";
      this.gallery.append(empty);
      return;
    }
    for (const entry of this.references) {
      const btn = el("button", "thumb");
      btn.dataset.refId = entry.id;
      const img = el("img") as HTMLImageElement;
      img.src = `data:image/png;base64,${entry.thumbnail_png_base64}`;
      img.alt = entry.id;
      btn.append(img, el("span", "caption", `${entry.id} (V ${entry.mean_v.toFixed(2)})`));
      btn.addEventListener("click", () => this.clickReference(entry));
      this.gallery.append(btn);
    }
  }

  private renderCard(result: EnhanceResult): HTMLElement {
    const card = el("div", "card");
    card.dataset.key = result.key;
    const img = el("img", "result") as HTMLImageElement;
    img.src = bytesToImageUrl(result.bytes);
    img.alt = result.key;
    card.append(img);
    if (result.refThumbnailUrl) {
      const refImg = el("img", "ref-thumb") as HTMLImageElement;
      refImg.src = result.refThumbnailUrl;
      card.append(refImg);
    }
    card.append(el("div", "caption", `${result.key} — mean V ${result.meanV.toFixed(3)}`));
    return card;
  }

  render(): void {
    this.banner.classList.toggle("hidden", !this.session.serviceDown);
    const err = this.session.lastError;
    this.errorBox.classList.toggle("hidden", !err);
    if (err) {
      this.errorBox.innerHTML = "";
      this.errorBox.append(el("span", undefined, err));
      const dismiss = el("button", "dismiss", "Dismiss");
      dismiss.addEventListener("click", () => this.session.dismissError());
      this.errorBox.append(dismiss);
    }
    this.strip.innerHTML = "";
    for (const result of this.session.orderedResults()) {
      this.strip.append(this.renderCard(result));
    }
  }
}

export function mount(root: HTMLElement, baseUrl: string): App {
  const client = new ServiceClient(baseUrl);
  const session = new Session(client);
  return new App(root, session, client);
}
