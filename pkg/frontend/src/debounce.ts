/**
 * Debounce — runs `fn` once things go quiet for `delayMs` after the last call.
 * Used for the threshold slider so scrubbing does not flood the preview
 * endpoint with one request per pixel of mouse travel.
 */
export function debounce<T extends (...args: never[]) => void>(
  fn: T,
  delayMs: number,
): ((...args: Parameters<T>) => void) & { cancel(): void } {
  let timerId: ReturnType<typeof setTimeout> | null = null;

  const debounced = (...args: Parameters<T>) => {
    if (timerId !== null) clearTimeout(timerId);
    timerId = setTimeout(() => {
      timerId = null;
      fn(...args);
    }, delayMs);
  };

  debounced.cancel = () => {
    if (timerId !== null) {
      clearTimeout(timerId);
      timerId = null;
    }
  };

  return debounced;
}
