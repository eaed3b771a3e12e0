declare module "pngjs" {
  export class PNG {
    static sync: {
      read(buffer: Buffer): { width: number; height: number; data: Buffer };
      write(png: PNG): Buffer;
    };
    width: number;
    height: number;
    data: Buffer;
    constructor(options?: { width?: number; height?: number });
  }
}
