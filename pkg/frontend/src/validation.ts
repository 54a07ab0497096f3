// Client-side checks for operator forms; anything failing here never reaches
// the API.  The server enforces its own rules regardless.

export const MIN_PERIOD_S = 10;

export interface FieldErrors {
  [field: string]: string;
}

export function validateRate(periodS: number): FieldErrors {
  const errors: FieldErrors = {};
  if (!Number.isFinite(periodS)) {
    errors.periodS = "period must be a number of seconds";
  } else if (periodS < MIN_PERIOD_S) {
    errors.periodS = `period must be at least ${MIN_PERIOD_S} s`;
  }
  return errors;
}

export function validateRegistration(input: {
  nodeId: string;
  kind: string;
  lat: number;
  lon: number;
  periodS: number;
}): FieldErrors {
  const errors: FieldErrors = {};
  if (!/^[A-Za-z0-9_.:-]+$/.test(input.nodeId)) {
    errors.nodeId = "id must be letters, digits, _ . : -";
  }
  if (input.kind !== "soil" && input.kind !== "livestock") {
    errors.kind = "kind must be soil or livestock";
  }
  if (!Number.isFinite(input.lat) || input.lat < -90 || input.lat > 90) {
    errors.lat = "latitude must be in [-90, 90]";
  }
  if (!Number.isFinite(input.lon) || input.lon < -180 || input.lon > 180) {
    errors.lon = "longitude must be in [-180, 180]";
  }
  Object.assign(errors, validateRate(input.periodS));
  return errors;
}

export function parseGroups(text: string): string[] {
  return text
    .split(",")
    .map((g) => g.trim())
    .filter((g) => g.length > 0);
}

export interface EditPatch {
  position?: [number, number];
  groups?: string[];
  periodS?: number;
  notes?: string;
}

/** build a node edit from raw form fields; blank fields stay unchanged */
export function buildPatch(raw: {
  lat: string;
  lon: string;
  period: string;
  groups: string;
  notes: string;
}): { patch: EditPatch; errors: FieldErrors } {
  const patch: EditPatch = {};
  const errors: FieldErrors = {};
  const hasLat = raw.lat.trim() !== "";
  const hasLon = raw.lon.trim() !== "";
  if (hasLat !== hasLon) {
    errors.position = "lat and lon must be edited together";
  } else if (hasLat && hasLon) {
    const lat = Number(raw.lat);
    const lon = Number(raw.lon);
    if (!Number.isFinite(lat) || lat < -90 || lat > 90) errors.lat = "latitude must be in [-90, 90]";
    if (!Number.isFinite(lon) || lon < -180 || lon > 180) errors.lon = "longitude must be in [-180, 180]";
    if (!errors.lat && !errors.lon) patch.position = [lat, lon];
  }
  if (raw.period.trim() !== "") {
    const period = Number(raw.period);
    Object.assign(errors, validateRate(period));
    if (!errors.periodS) patch.periodS = period;
  }
  if (raw.groups.trim() !== "") patch.groups = parseGroups(raw.groups);
  if (raw.notes.trim() !== "") patch.notes = raw.notes;
  if (!Object.keys(errors).length && !Object.keys(patch).length) {
    errors.patch = "nothing to change";
  }
  return { patch, errors };
}
