/** Draggable A/B wipe: result on top of the direct composite. */

export function clampFraction(f: number): number {
  return Math.min(1, Math.max(0, f));
}

/** CSS clip-path for the top (result) image at wipe position f in [0,1]. */
export function wipeClipPath(f: number): string {
  const pct = (clampFraction(f) * 100).toFixed(2);
  return `inset(0 ${(100 - Number(pct)).toFixed(2)}% 0 0)`;
}

export interface WipeHandles {
  setFraction(f: number): void;
  getFraction(): number;
}

export function attachWipe(
  container: HTMLElement,
  topImage: HTMLElement,
  divider: HTMLElement,
): WipeHandles {
  let fraction = 0.5;

  const apply = () => {
    topImage.style.clipPath = wipeClipPath(fraction);
    divider.style.left = `${(fraction * 100).toFixed(2)}%`;
  };

  const fromEvent = (ev: PointerEvent) => {
    const rect = container.getBoundingClientRect();
    fraction = clampFraction((ev.clientX - rect.left) / rect.width);
    apply();
  };

  let dragging = false;
  container.addEventListener("pointerdown", (ev) => {
    dragging = true;
    container.setPointerCapture(ev.pointerId);
    fromEvent(ev);
  });
  container.addEventListener("pointermove", (ev) => {
    if (dragging) fromEvent(ev);
  });
  container.addEventListener("pointerup", () => {
    dragging = false;
  });
  apply();

  return {
    setFraction(f: number) {
      fraction = clampFraction(f);
      apply();
    },
    getFraction: () => fraction,
  };
}
