// svkit/io.hpp
//
// PCM WAV reading/writing, the indexed per-utterance archive container used
// for features and embeddings, and the named-tensor model file format.

// Copyright 2026  The svkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SVKIT_IO_HPP
#define SVKIT_IO_HPP

#include <map>
#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

struct Waveform {
  std::vector<double> samples;  // normalized to [-1, 1]
  int sample_rate = 0;
};

// 16-bit signed little-endian mono PCM.
Waveform ReadWav(const std::string &path);
void WriteWav(const std::string &path, const Waveform &w);

// Single-file container of (utterance-id, frames x coeffs float32 matrix)
// records, with a text index sidecar "<id> <byte-offset>" at <path>.idx.
class ArchiveWriter {
 public:
  explicit ArchiveWriter(const std::string &path);
  ~ArchiveWriter();
  void Write(const std::string &utt_id, const Matrix &m);
  void Close();  // flushes data and index; atomic rename from temp files

 private:
  std::string path_;
  std::string tmp_path_;
  void *file_ = nullptr;  // FILE*
  std::vector<std::pair<std::string, std::uint64_t>> index_;
};

class ArchiveReader {
 public:
  explicit ArchiveReader(const std::string &path);
  bool Has(const std::string &utt_id) const;
  Matrix Read(const std::string &utt_id) const;
  std::vector<std::string> Ids() const;  // in archive order

 private:
  std::string path_;
  std::vector<std::pair<std::string, std::uint64_t>> index_;
  std::map<std::string, std::uint64_t> offset_;
};

// Reads/writes a whole archive at once; convenient for model-sized data.
std::vector<std::pair<std::string, Matrix>> ReadArchive(const std::string &path);
void WriteArchive(const std::string &path,
                  const std::vector<std::pair<std::string, Matrix>> &records);

// Named-tensor model file: format version, text metadata entries
// (e.g. the netspec text, loss config), then named float32 tensors.
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::map<std::string, Matrix> tensors;
};

void WriteTensorFile(const std::string &path, const TensorFile &tf);
TensorFile ReadTensorFile(const std::string &path);

// Score and trial-key text files: "<enroll> <test> <score|label>" per line.
struct Trial {
  std::string enroll, test;
  double score = 0.0;
  int label = -1;  // 1 target, 0 nontarget, -1 unknown
};

std::vector<Trial> ReadScoreFile(const std::string &path);
void WriteScoreFile(const std::string &path, const std::vector<Trial> &trials);
std::vector<Trial> ReadKeyFile(const std::string &path);

std::vector<std::string> ReadIdList(const std::string &path);

// Write-temp-then-rename for plain text payloads.
void AtomicWriteText(const std::string &path, const std::string &text);
std::string ReadTextFile(const std::string &path);

}  // namespace svkit

#endif  // SVKIT_IO_HPP
