/**
 * Conversion pipeline: per-chunk NPZ reconstruction dumps in, engine
 * interchange tree out (PFM depths, PGM masks, pose JSON lines, track
 * index, manifest).
 *
 * Expected archive keys (base names configurable):
 *   <depth>/<frame>        H x W float32
 *   <pose>/<frame>         4 x 4 float   (camera-to-world, bottom row 0 0 0 1)
 *   <intrinsics>/<frame>   3 x 3 float
 *   <mask>/<track>/<frame> H x W uint8   (binarized at >= 128)
 *
 * Frames shared by two chunks are emitted from the earliest chunk. The
 * whole input is validated before anything is written: a failing run
 * produces a per-file error report and no manifest.
 */

import * as fs from 'node:fs'
import * as path from 'node:path'

import {
  ensureDir,
  frameName,
  joinRel,
  Manifest,
  PoseRecord,
  resolveOut,
  Track,
  writeManifest,
  writeMaskPgm,
  writePfm,
  writePoseLines,
  writeTrackIndex,
} from './formats'
import { hasShape, is2d, NpyArray, parseNpz } from './npy'

export type KeyMap = {
  depth: string
  pose: string
  intrinsics: string
  mask: string
}

export const DEFAULT_KEYS: KeyMap = {
  depth: 'depth',
  pose: 'pose',
  intrinsics: 'intrinsics',
  mask: 'mask',
}

export class ConvertError extends Error {
  constructor(public readonly report: string[]) {
    super('conversion failed:\n' + report.map((line) => '  - ' + line).join('\n'))
  }
}

type FrameData = {
  depth: Float32Array
  height: number
  width: number
  pose: number[]
  fx: number
  fy: number
  cx: number
  cy: number
}

type ChunkData = {
  file: string
  start: number
  end: number
  frames: Map<number, FrameData>
  masks: Map<number, Map<number, Uint8Array>>
}

function asNumbers(arr: NpyArray): number[] {
  return Array.from(arr.data as ArrayLike<number>, Number)
}

function parseFrameId(token: string): number | null {
  if (!/^\d+$/.test(token)) return null
  return parseInt(token, 10)
}

export function scanChunk(file: string, keys: KeyMap): { chunk: ChunkData; errors: string[] } {
  const errors: string[] = []
  const name = path.basename(file)
  let entries: Record<string, NpyArray>
  try {
    entries = parseNpz(new Uint8Array(fs.readFileSync(file)))
  } catch (e) {
    return {
      chunk: { file, start: 0, end: 0, frames: new Map(), masks: new Map() },
      errors: [`${name}: unreadable archive: ${(e as Error).message}`],
    }
  }

  const depths = new Map<number, NpyArray>()
  const poses = new Map<number, NpyArray>()
  const intrinsics = new Map<number, NpyArray>()
  const masks = new Map<number, Map<number, NpyArray>>()
  for (const [key, arr] of Object.entries(entries)) {
    const parts = key.split('/')
    if (parts[0] === keys.mask && parts.length === 3) {
      const track = parseFrameId(parts[1])
      const frame = parseFrameId(parts[2])
      if (track === null || frame === null) {
        errors.push(`${name}: malformed mask key ${key}`)
        continue
      }
      if (!masks.has(track)) masks.set(track, new Map())
      masks.get(track)!.set(frame, arr)
      continue
    }
    if (parts.length !== 2) continue // ignore unrelated payloads (confidence maps etc.)
    const frame = parseFrameId(parts[1])
    if (frame === null) continue
    if (parts[0] === keys.depth) depths.set(frame, arr)
    else if (parts[0] === keys.pose) poses.set(frame, arr)
    else if (parts[0] === keys.intrinsics) intrinsics.set(frame, arr)
  }

  if (depths.size === 0) errors.push(`${name}: no '${keys.depth}/<frame>' arrays found`)

  const frames = new Map<number, FrameData>()
  for (const [frame, depth] of [...depths.entries()].sort((a, b) => a[0] - b[0])) {
    const tag = `${name}: frame ${frame}`
    if (!is2d(depth)) {
      errors.push(`${tag}: depth must be 2-D, got shape [${depth.shape}]`)
      continue
    }
    if (!(depth.data instanceof Float32Array)) {
      errors.push(`${tag}: depth must be float32 for bit-exact conversion, got ${depth.data.constructor.name}`)
      continue
    }
    const pose = poses.get(frame)
    const k = intrinsics.get(frame)
    if (!pose) {
      errors.push(`${tag}: missing key '${keys.pose}/${frame}'`)
      continue
    }
    if (!k) {
      errors.push(`${tag}: missing key '${keys.intrinsics}/${frame}'`)
      continue
    }
    if (!hasShape(pose, [4, 4])) {
      errors.push(`${tag}: pose must be 4x4, got [${pose.shape}]`)
      continue
    }
    if (!hasShape(k, [3, 3])) {
      errors.push(`${tag}: intrinsics must be 3x3, got [${k.shape}]`)
      continue
    }
    const poseValues = asNumbers(pose)
    const bottom = poseValues.slice(12)
    if (bottom.some((v, i) => Math.abs(v - (i === 3 ? 1 : 0)) > 1e-9)) {
      errors.push(`${tag}: pose bottom row must be (0, 0, 0, 1), got (${bottom})`)
      continue
    }
    const kv = asNumbers(k)
    const [height, width] = depth.shape
    if (!(kv[0] > 0) || !(kv[4] > 0) || kv[2] < 0 || kv[2] >= width || kv[5] < 0 || kv[5] >= height) {
      errors.push(`${tag}: intrinsics fx=${kv[0]} fy=${kv[4]} cx=${kv[2]} cy=${kv[5]} invalid for ${width}x${height}`)
      continue
    }
    frames.set(frame, {
      depth: depth.data,
      height,
      width,
      pose: poseValues,
      fx: kv[0],
      fy: kv[4],
      cx: kv[2],
      cy: kv[5],
    })
  }

  const trackMasks = new Map<number, Map<number, Uint8Array>>()
  for (const [track, perFrame] of masks) {
    for (const [frame, arr] of perFrame) {
      const owner = frames.get(frame)
      if (!owner) continue // masks for frames this chunk does not carry
      if (!(arr.data instanceof Uint8Array) || !hasShape(arr, [owner.height, owner.width])) {
        errors.push(`${name}: mask ${keys.mask}/${track}/${frame} must be uint8 of ${owner.width}x${owner.height}`)
        continue
      }
      if (!trackMasks.has(track)) trackMasks.set(track, new Map())
      trackMasks.get(track)!.set(frame, arr.data)
    }
  }

  const ids = [...frames.keys()].sort((a, b) => a - b)
  if (ids.length > 0) {
    for (let i = 1; i < ids.length; i++) {
      if (ids[i] !== ids[i - 1] + 1) {
        errors.push(`${name}: frames are not contiguous (${ids[i - 1]} then ${ids[i]})`)
        break
      }
    }
  }
  return {
    chunk: {
      file,
      start: ids.length ? ids[0] : 0,
      end: ids.length ? ids[ids.length - 1] + 1 : 0,
      frames,
      masks: trackMasks,
    },
    errors,
  }
}

export type ChunkPlan = { frameCount: number; chunkLength: number; overlap: number }

export function derivePlan(chunks: ChunkData[]): { plan: ChunkPlan; errors: string[] } {
  const errors: string[] = []
  const sorted = chunks.slice().sort((a, b) => a.start - b.start)
  const frameCount = Math.max(...sorted.map((c) => c.end))
  if (sorted.length === 1) {
    if (sorted[0].start !== 0) errors.push(`${path.basename(sorted[0].file)}: single chunk must start at frame 0`)
    return { plan: { frameCount, chunkLength: frameCount, overlap: 0 }, errors }
  }
  const chunkLength = sorted[0].end - sorted[0].start
  const stride = sorted[1].start - sorted[0].start
  if (stride <= 0 || stride > chunkLength) {
    errors.push(`chunk starts must advance by a uniform stride in (0, K]; got stride ${stride} for K=${chunkLength}`)
    return { plan: { frameCount, chunkLength, overlap: 0 }, errors }
  }
  const overlap = chunkLength - stride
  sorted.forEach((chunk, i) => {
    const expectedStart = i * stride
    const expectedEnd = Math.min(expectedStart + chunkLength, frameCount)
    if (chunk.start !== expectedStart || chunk.end !== expectedEnd) {
      errors.push(
        `${path.basename(chunk.file)}: spans [${chunk.start}, ${chunk.end}) but the uniform plan expects [${expectedStart}, ${expectedEnd})`,
      )
    }
  })
  const expectedChunks = Math.floor((frameCount - 1) / stride) + 1
  if (expectedChunks !== sorted.length) {
    errors.push(`found ${sorted.length} archives but frame range implies ${expectedChunks} chunks`)
  }
  return { plan: { frameCount, chunkLength, overlap }, errors }
}

export type ConvertOptions = {
  inDir: string
  outDir: string
  keys?: Partial<KeyMap>
  onsetsFile?: string
  fps?: number
}

export type ConvertSummary = {
  manifestPath: string
  frameCount: number
  chunkCount: number
  trackCount: number
}

function loadOnsets(file: string | undefined, inDir: string): Map<number, number> {
  const candidate = file ?? path.join(inDir, 'onsets.json')
  const onsets = new Map<number, number>()
  if (!fs.existsSync(candidate)) {
    if (file) throw new ConvertError([`onset annotation file not found: ${file}`])
    return onsets
  }
  const doc = JSON.parse(fs.readFileSync(candidate, 'utf-8')) as Record<string, number>
  for (const [key, value] of Object.entries(doc)) {
    const track = parseFrameId(key)
    if (track === null || !Number.isInteger(value)) {
      throw new ConvertError([`onsets.json: entries must map integer track ids to integer frames (got ${key}: ${value})`])
    }
    onsets.set(track, value)
  }
  return onsets
}

export function convert(options: ConvertOptions): ConvertSummary {
  const keys: KeyMap = { ...DEFAULT_KEYS, ...(options.keys ?? {}) }
  const fps = options.fps ?? 30.0

  const archives = fs.existsSync(options.inDir)
    ? fs.readdirSync(options.inDir).filter((f) => f.endsWith('.npz')).sort()
    : []
  if (archives.length === 0) {
    throw new ConvertError([`no .npz archives found under ${options.inDir}`])
  }

  const errors: string[] = []
  const chunks: ChunkData[] = []
  for (const file of archives) {
    const { chunk, errors: chunkErrors } = scanChunk(path.join(options.inDir, file), keys)
    errors.push(...chunkErrors)
    chunks.push(chunk)
  }
  if (errors.length > 0) throw new ConvertError(errors)

  const { plan, errors: planErrors } = derivePlan(chunks)
  if (planErrors.length > 0) throw new ConvertError(planErrors)

  const onsets = loadOnsets(options.onsetsFile, options.inDir)
  const trackIds = new Set<number>()
  for (const chunk of chunks) for (const id of chunk.masks.keys()) trackIds.add(id)
  for (const [track, onset] of onsets) {
    if (!trackIds.has(track)) errors.push(`onsets.json: track ${track} has no masks in any archive`)
    else if (onset < 0 || onset >= plan.frameCount) {
      errors.push(`onsets.json: track ${track} onset ${onset} outside [0, ${plan.frameCount})`)
    }
  }
  if (errors.length > 0) throw new ConvertError(errors)

  const sorted = chunks.slice().sort((a, b) => a.start - b.start)
  // earliest chunk owns each frame it covers
  const owner = new Array<number>(plan.frameCount).fill(-1)
  sorted.forEach((chunk, i) => {
    for (let t = chunk.start; t < chunk.end; t++) if (owner[t] === -1) owner[t] = i
  })

  ensureDir(resolveOut(options.outDir, 'depth'))
  ensureDir(resolveOut(options.outDir, 'poses'))

  const frames: Manifest['frames'] = []
  for (let t = 0; t < plan.frameCount; t++) {
    const frame = sorted[owner[t]].frames.get(t)!
    const rel = joinRel('depth', `${frameName(t)}.pfm`)
    writePfm(resolveOut(options.outDir, rel), frame.depth, frame.width, frame.height)
    frames.push({
      frameId: t,
      depthPath: rel,
      width: frame.width,
      height: frame.height,
      fx: frame.fx,
      fy: frame.fy,
      cx: frame.cx,
      cy: frame.cy,
    })
  }

  const chunkPosePaths: string[] = []
  sorted.forEach((chunk, i) => {
    const rel = joinRel('poses', `chunk_${String(i + 1).padStart(3, '0')}.jsonl`)
    const records: PoseRecord[] = [...chunk.frames.entries()].map(([frameId, f]) => ({
      frameId,
      matrix: f.pose,
    }))
    writePoseLines(resolveOut(options.outDir, rel), records)
    chunkPosePaths.push(rel)
  })

  const tracks: Track[] = []
  for (const track of [...trackIds].sort((a, b) => a - b)) {
    const pattern = `masks/track_${String(track).padStart(3, '0')}/{frame_id:06d}.pgm`
    const dir = resolveOut(options.outDir, joinRel('masks', `track_${String(track).padStart(3, '0')}`))
    ensureDir(dir)
    for (let t = 0; t < plan.frameCount; t++) {
      const chunk = sorted[owner[t]]
      const mask = chunk.masks.get(track)?.get(t)
      if (!mask) continue
      const frame = chunk.frames.get(t)!
      const bits = Uint8Array.from(mask, (v) => (v >= 128 ? 1 : 0))
      writeMaskPgm(path.join(dir, `${frameName(t)}.pgm`), bits, frame.width, frame.height)
    }
    const onset = onsets.get(track)
    tracks.push({
      trackId: track,
      name: `track-${String(track).padStart(3, '0')}`,
      category: onset === undefined ? 'hand' : 'object',
      maskPattern: pattern,
      ...(onset === undefined ? {} : { onsetFrame: onset }),
    })
  }
  if (tracks.length > 0) {
    writeTrackIndex(resolveOut(options.outDir, 'tracks.json'), tracks)
  }

  const manifestPath = resolveOut(options.outDir, 'manifest.json')
  writeManifest(manifestPath, {
    frameCount: plan.frameCount,
    fps,
    chunkLength: plan.chunkLength,
    chunkOverlap: plan.overlap,
    frames,
    chunkPosePaths,
    trackIndexPath: tracks.length > 0 ? 'tracks.json' : undefined,
  })
  return {
    manifestPath,
    frameCount: plan.frameCount,
    chunkCount: sorted.length,
    trackCount: tracks.length,
  }
}
