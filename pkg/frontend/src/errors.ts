/** Error taxonomy; the CLI maps these to exit codes (usage 1, data 2). */

export class UsageError extends Error {}

/** Problems with the image tree itself (missing or empty class folders). */
export class JobError extends Error {}

/** The backbone cannot be provided (unknown name, failed load). */
export class BackendError extends Error {}
