// Camera auto-fit math, kept free of three.js so it can be unit tested.

export interface FitResult {
  center: [number, number, number];
  distance: number;
  radius: number;
}

/** Frame a bounding box: camera distance that fits the box sphere in view. */
export function fitBoundingBox(min: number[], max: number[], fovDegrees: number,
                               margin = 1.25): FitResult {
  const center: [number, number, number] = [
    (min[0] + max[0]) / 2,
    (min[1] + max[1]) / 2,
    (min[2] + max[2]) / 2,
  ];
  const dx = max[0] - min[0];
  const dy = max[1] - min[1];
  const dz = max[2] - min[2];
  const radius = Math.sqrt(dx * dx + dy * dy + dz * dz) / 2 || 1;
  const halfFov = (fovDegrees * Math.PI) / 360;
  const distance = (radius * margin) / Math.sin(halfFov);
  return { center, distance, radius };
}
