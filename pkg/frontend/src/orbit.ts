/**
 * Orbit input: accumulates drag deltas and emits one coalesced camera update
 * per animation tick, no matter how many pointer events arrived.
 */

export const AZIMUTH_DEG_PER_PIXEL = 0.25;
export const ELEVATION_DEG_PER_PIXEL = 0.25;
export const ELEVATION_LIMIT_DEG = 89;
export const ZOOM_FACTOR_PER_NOTCH = 1.1;

export interface OrbitPose {
  azimuth: number;
  elevation: number;
  distanceScale: number;
}

export class OrbitControl {
  private azimuth: number;
  private elevation: number;
  private distanceScale = 1;
  private pendingChange = false;

  constructor(azimuth = 0, elevation = 0) {
    this.azimuth = azimuth;
    this.elevation = elevation;
  }

  /** Pointer drag in screen pixels (y grows downward; dragging up looks from above). */
  drag(dxPixels: number, dyPixels: number): void {
    this.azimuth += dxPixels * AZIMUTH_DEG_PER_PIXEL;
    this.elevation = clampElevation(this.elevation - dyPixels * ELEVATION_DEG_PER_PIXEL);
    this.pendingChange = true;
  }

  /** Wheel notches; positive zooms out. */
  zoom(notches: number): void {
    this.distanceScale *= Math.pow(ZOOM_FACTOR_PER_NOTCH, notches);
    this.pendingChange = true;
  }

  /**
   * Collect the coalesced pose for this tick, or null when nothing changed.
   * Call once per animation frame; all drags since the last flush fold into
   * a single result.
   */
  flush(): OrbitPose | null {
    if (!this.pendingChange) return null;
    this.pendingChange = false;
    return { azimuth: this.azimuth, elevation: this.elevation, distanceScale: this.distanceScale };
  }

  pose(): OrbitPose {
    return { azimuth: this.azimuth, elevation: this.elevation, distanceScale: this.distanceScale };
  }
}

export function clampElevation(value: number): number {
  return Math.min(ELEVATION_LIMIT_DEG, Math.max(-ELEVATION_LIMIT_DEG, value));
}
