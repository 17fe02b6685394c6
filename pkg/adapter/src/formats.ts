/**
 * Writers for the engine's interchange formats: PFM depth rasters, strict
 * 0/255 PGM masks, camera-to-world pose JSON lines, the track index and
 * the sequence manifest.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

export function writePfm(file: string, data: Float32Array, width: number, height: number): void {
  const header = Buffer.from(`Pf\n${width} ${height}\n-1.0\n`, 'ascii')
  const payload = Buffer.alloc(4 * width * height)
  // file rows run bottom-up, little-endian float32
  for (let row = 0; row < height; row++) {
    const src = (height - 1 - row) * width
    for (let col = 0; col < width; col++) {
      payload.writeFloatLE(data[src + col], 4 * (row * width + col))
    }
  }
  fs.writeFileSync(file, Buffer.concat([header, payload]))
}

export function writeMaskPgm(file: string, bits: Uint8Array, width: number, height: number): void {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, 'ascii')
  const payload = Buffer.alloc(width * height)
  for (let i = 0; i < bits.length; i++) payload[i] = bits[i] ? 255 : 0
  fs.writeFileSync(file, Buffer.concat([header, payload]))
}

export type PoseRecord = {
  frameId: number
  matrix: number[] // 16 numbers, row-major 4x4
}

export function writePoseLines(file: string, poses: PoseRecord[]): void {
  const lines = poses
    .slice()
    .sort((a, b) => a.frameId - b.frameId)
    .map((p) => JSON.stringify({ frame_id: p.frameId, matrix: p.matrix }))
  fs.writeFileSync(file, lines.join('\n') + '\n', 'ascii')
}

export type Track = {
  trackId: number
  name: string
  category: 'hand' | 'object'
  maskPattern: string
  onsetFrame?: number
}

export function writeTrackIndex(file: string, tracks: Track[]): void {
  const doc = {
    tracks: tracks
      .slice()
      .sort((a, b) => a.trackId - b.trackId)
      .map((t) => ({
        track_id: t.trackId,
        name: t.name,
        category: t.category,
        mask_pattern: t.maskPattern,
        ...(t.onsetFrame !== undefined ? { onset_frame: t.onsetFrame } : {}),
      })),
  }
  fs.writeFileSync(file, JSON.stringify(doc, null, 2) + '\n', 'utf-8')
}

export type FrameEntry = {
  frameId: number
  depthPath: string
  width: number
  height: number
  fx: number
  fy: number
  cx: number
  cy: number
}

export type Manifest = {
  frameCount: number
  fps: number
  chunkLength: number
  chunkOverlap: number
  frames: FrameEntry[]
  chunkPosePaths: string[]
  trackIndexPath?: string
}

export function writeManifest(file: string, manifest: Manifest): void {
  const doc: Record<string, unknown> = {
    frame_count: manifest.frameCount,
    fps: manifest.fps,
    chunking: { length: manifest.chunkLength, overlap: manifest.chunkOverlap },
    frames: manifest.frames.map((f) => ({
      frame_id: f.frameId,
      depth: f.depthPath,
      width: f.width,
      height: f.height,
      intrinsics: { fx: f.fx, fy: f.fy, cx: f.cx, cy: f.cy },
    })),
    chunk_poses: manifest.chunkPosePaths,
  }
  if (manifest.trackIndexPath !== undefined) doc.track_index = manifest.trackIndexPath
  fs.writeFileSync(file, JSON.stringify(doc, null, 2) + '\n', 'utf-8')
}

export function ensureDir(dir: string): void {
  fs.mkdirSync(dir, { recursive: true })
}

export function frameName(frameId: number): string {
  return String(frameId).padStart(6, '0')
}

export function joinRel(...parts: string[]): string {
  return parts.join('/')
}

export function resolveOut(outDir: string, rel: string): string {
  return path.join(outDir, ...rel.split('/'))
}
