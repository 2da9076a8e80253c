/** Display geometry of the platform: footprint rectangle and the positions
 * of the 11 perimeter taxels in the base frame. Pure render data; forces
 * always come from snapshots. phi points into the footprint, the direction
 * a compressive push acts along. */

export interface TaxelPlacement {
  index: number;
  x: number;
  y: number;
  phi: number;
}

export const FOOTPRINT_LENGTH = 0.98; // m, along base x
export const FOOTPRINT_WIDTH = 0.8; // m, along base y

const LEFT = -Math.PI / 2;
const FRONT = Math.PI;
const RIGHT = Math.PI / 2;

export const TAXEL_RING: readonly TaxelPlacement[] = [
  { index: 1, x: 0.3675, y: 0.4, phi: LEFT },
  { index: 2, x: 0.1225, y: 0.4, phi: LEFT },
  { index: 3, x: -0.1225, y: 0.4, phi: LEFT },
  { index: 4, x: -0.3675, y: 0.4, phi: LEFT },
  { index: 5, x: 0.49, y: 0.2666666667, phi: FRONT },
  { index: 6, x: 0.49, y: 0.0, phi: FRONT },
  { index: 7, x: 0.49, y: -0.2666666667, phi: FRONT },
  { index: 8, x: 0.3675, y: -0.4, phi: RIGHT },
  { index: 9, x: 0.1225, y: -0.4, phi: RIGHT },
  { index: 10, x: -0.1225, y: -0.4, phi: RIGHT },
  { index: 11, x: -0.3675, y: -0.4, phi: RIGHT },
];
