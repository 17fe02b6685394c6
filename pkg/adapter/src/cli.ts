#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { convert, ConvertError, DEFAULT_KEYS, KeyMap } from './convert'

function parseKeys(spec: string | undefined): Partial<KeyMap> {
  if (!spec) return {}
  const out: Partial<KeyMap> = {}
  for (const pair of spec.split(',')) {
    const [name, value] = pair.split('=')
    if (!value || !(name in DEFAULT_KEYS)) {
      throw new ConvertError([`--keys entries must be one of depth|pose|intrinsics|mask=<name>, got '${pair}'`])
    }
    out[name as keyof KeyMap] = value
  }
  return out
}

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('convert', 'convert per-chunk NPZ dumps into engine interchange files', (cmd) =>
      cmd
        .option('in', { type: 'string', demandOption: true, describe: 'directory of chunk .npz archives' })
        .option('out', { type: 'string', demandOption: true, describe: 'output dataset directory' })
        .option('keys', { type: 'string', describe: 'key renames, e.g. depth=d,pose=T,intrinsics=K,mask=m' })
        .option('onsets', { type: 'string', describe: 'JSON file mapping track_id -> onset frame (default: <in>/onsets.json)' })
        .option('fps', { type: 'number', default: 30 }),
    )
    .demandCommand(1)
    .strict()
    .help()
    .parse()

  try {
    const summary = convert({
      inDir: argv.in as string,
      outDir: argv.out as string,
      keys: parseKeys(argv.keys as string | undefined),
      onsetsFile: argv.onsets as string | undefined,
      fps: argv.fps as number,
    })
    console.log(
      `converted ${summary.chunkCount} chunks / ${summary.frameCount} frames` +
        ` / ${summary.trackCount} tracks -> ${summary.manifestPath}`,
    )
    return 0
  } catch (e) {
    if (e instanceof ConvertError) {
      console.error(e.message)
      return 1
    }
    throw e
  }
}

main().then((code) => {
  process.exitCode = code
})
