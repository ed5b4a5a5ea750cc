// src/io.cpp

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

#include "svkit/io.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace svkit {

namespace {

// All container formats are little-endian; this code assumes an LE host.

template <typename T>
void PutRaw(std::FILE *f, T v) {
  if (std::fwrite(&v, sizeof(T), 1, f) != 1)
    throw DataError("short write");
}

template <typename T>
T GetRaw(std::FILE *f) {
  T v;
  if (std::fread(&v, sizeof(T), 1, f) != 1)
    throw DataError("short read");
  return v;
}

void PutString(std::FILE *f, const std::string &s) {
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(s.size()));
  if (!s.empty() && std::fwrite(s.data(), 1, s.size(), f) != s.size())
    throw DataError("short write");
}

std::string GetString(std::FILE *f) {
  std::uint32_t n = GetRaw<std::uint32_t>(f);
  std::string s(n, '\0');
  if (n > 0 && std::fread(s.data(), 1, n, f) != n)
    throw DataError("short read");
  return s;
}

void PutMatrix(std::FILE *f, const Matrix &m) {
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(m.rows()));
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(m.cols()));
  std::vector<float> buf(static_cast<size_t>(m.rows()) * m.cols());
  size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); r++)
    for (Eigen::Index c = 0; c < m.cols(); c++)
      buf[k++] = static_cast<float>(m(r, c));
  if (!buf.empty() && std::fwrite(buf.data(), sizeof(float), buf.size(), f) != buf.size())
    throw DataError("short write");
}

Matrix GetMatrix(std::FILE *f) {
  std::uint32_t rows = GetRaw<std::uint32_t>(f);
  std::uint32_t cols = GetRaw<std::uint32_t>(f);
  std::vector<float> buf(static_cast<size_t>(rows) * cols);
  if (!buf.empty() && std::fread(buf.data(), sizeof(float), buf.size(), f) != buf.size())
    throw DataError("short read");
  Matrix m(rows, cols);
  size_t k = 0;
  for (std::uint32_t r = 0; r < rows; r++)
    for (std::uint32_t c = 0; c < cols; c++)
      m(r, c) = buf[k++];
  return m;
}

std::FILE *OpenOrThrow(const std::string &path, const char *mode) {
  std::FILE *f = std::fopen(path.c_str(), mode);
  if (f == nullptr)
    throw DataError("cannot open " + path);
  return f;
}

}  // namespace

// ---------------------------------------------------------------- WAV

Waveform ReadWav(const std::string &path) {
  std::FILE *f = OpenOrThrow(path, "rb");
  char tag[5] = {0};
  auto read_tag = [&]() {
    if (std::fread(tag, 1, 4, f) != 4) {
      std::fclose(f);
      throw DataError(path + ": truncated WAV");
    }
  };
  read_tag();
  if (std::strcmp(tag, "RIFF") != 0) {
    std::fclose(f);
    throw DataError(path + ": not a RIFF file");
  }
  GetRaw<std::uint32_t>(f);  // riff size
  read_tag();
  if (std::strcmp(tag, "WAVE") != 0) {
    std::fclose(f);
    throw DataError(path + ": not a WAVE file");
  }
  int sample_rate = 0, channels = 0, bits = 0;
  std::vector<std::int16_t> pcm;
  while (std::fread(tag, 1, 4, f) == 4) {
    std::uint32_t sz = GetRaw<std::uint32_t>(f);
    if (std::strcmp(tag, "fmt ") == 0) {
      std::uint16_t fmt = GetRaw<std::uint16_t>(f);
      channels = GetRaw<std::uint16_t>(f);
      sample_rate = static_cast<int>(GetRaw<std::uint32_t>(f));
      GetRaw<std::uint32_t>(f);  // byte rate
      GetRaw<std::uint16_t>(f);  // block align
      bits = GetRaw<std::uint16_t>(f);
      if (sz > 16)
        std::fseek(f, sz - 16, SEEK_CUR);
      if (fmt != 1) {
        std::fclose(f);
        throw DataError(path + ": only PCM WAV supported");
      }
    } else if (std::strcmp(tag, "data") == 0) {
      pcm.resize(sz / 2);
      if (!pcm.empty() && std::fread(pcm.data(), 2, pcm.size(), f) != pcm.size()) {
        std::fclose(f);
        throw DataError(path + ": truncated data chunk");
      }
    } else {
      std::fseek(f, sz + (sz & 1), SEEK_CUR);
    }
  }
  std::fclose(f);
  if (channels != 1 || bits != 16)
    throw DataError(path + ": expected 16-bit mono PCM, got " +
                    std::to_string(bits) + "-bit " + std::to_string(channels) + "ch");
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); i++)
    w.samples[i] = pcm[i] / 32768.0;
  return w;
}

void WriteWav(const std::string &path, const Waveform &w) {
  if (w.sample_rate <= 0)
    throw ConfigError("WriteWav: sample_rate must be positive");
  std::FILE *f = OpenOrThrow(path, "wb");
  std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::fwrite("RIFF", 1, 4, f);
  PutRaw<std::uint32_t>(f, 36 + data_bytes);
  std::fwrite("WAVE", 1, 4, f);
  std::fwrite("fmt ", 1, 4, f);
  PutRaw<std::uint32_t>(f, 16);
  PutRaw<std::uint16_t>(f, 1);  // PCM
  PutRaw<std::uint16_t>(f, 1);  // mono
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(w.sample_rate));
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(w.sample_rate * 2));
  PutRaw<std::uint16_t>(f, 2);
  PutRaw<std::uint16_t>(f, 16);
  std::fwrite("data", 1, 4, f);
  PutRaw<std::uint32_t>(f, data_bytes);
  for (double s : w.samples) {
    double clipped = std::max(-1.0, std::min(1.0, s));
    auto v = static_cast<std::int16_t>(std::lround(clipped * 32767.0));
    PutRaw<std::int16_t>(f, v);
  }
  std::fclose(f);
}

// ---------------------------------------------------------------- archive

ArchiveWriter::ArchiveWriter(const std::string &path) : path_(path) {
  tmp_path_ = path + ".tmp";
  file_ = OpenOrThrow(tmp_path_, "wb");
}

ArchiveWriter::~ArchiveWriter() {
  if (file_ != nullptr)
    Close();
}

void ArchiveWriter::Write(const std::string &utt_id, const Matrix &m) {
  std::FILE *f = static_cast<std::FILE *>(file_);
  long pos = std::ftell(f);
  index_.emplace_back(utt_id, static_cast<std::uint64_t>(pos));
  PutString(f, utt_id);
  PutMatrix(f, m);
}

void ArchiveWriter::Close() {
  std::FILE *f = static_cast<std::FILE *>(file_);
  std::fclose(f);
  file_ = nullptr;
  std::ostringstream idx;
  for (const auto &[id, off] : index_)
    idx << id << ' ' << off << '\n';
  std::filesystem::rename(tmp_path_, path_);
  AtomicWriteText(path_ + ".idx", idx.str());
}

ArchiveReader::ArchiveReader(const std::string &path) : path_(path) {
  std::ifstream idx(path + ".idx");
  if (!idx)
    throw DataError("missing archive index " + path + ".idx");
  std::string id;
  std::uint64_t off;
  while (idx >> id >> off) {
    index_.emplace_back(id, off);
    offset_[id] = off;
  }
}

bool ArchiveReader::Has(const std::string &utt_id) const {
  return offset_.count(utt_id) > 0;
}

Matrix ArchiveReader::Read(const std::string &utt_id) const {
  auto it = offset_.find(utt_id);
  if (it == offset_.end())
    throw DataError("utterance " + utt_id + " not in archive " + path_);
  std::FILE *f = OpenOrThrow(path_, "rb");
  std::fseek(f, static_cast<long>(it->second), SEEK_SET);
  std::string stored = GetString(f);
  if (stored != utt_id) {
    std::fclose(f);
    throw DataError("archive index out of sync for " + utt_id);
  }
  Matrix m = GetMatrix(f);
  std::fclose(f);
  return m;
}

std::vector<std::string> ArchiveReader::Ids() const {
  std::vector<std::string> ids;
  ids.reserve(index_.size());
  for (const auto &[id, off] : index_)
    ids.push_back(id);
  return ids;
}

std::vector<std::pair<std::string, Matrix>> ReadArchive(const std::string &path) {
  ArchiveReader r(path);
  std::vector<std::pair<std::string, Matrix>> out;
  for (const auto &id : r.Ids())
    out.emplace_back(id, r.Read(id));
  return out;
}

void WriteArchive(const std::string &path,
                  const std::vector<std::pair<std::string, Matrix>> &records) {
  ArchiveWriter w(path);
  for (const auto &[id, m] : records)
    w.Write(id, m);
  w.Close();
}

// ---------------------------------------------------------------- tensor file

static const char kTensorMagic[4] = {'S', 'V', 'K', 'T'};
static const std::uint32_t kTensorVersion = 1;

void WriteTensorFile(const std::string &path, const TensorFile &tf) {
  std::string tmp = path + ".tmp";
  std::FILE *f = OpenOrThrow(tmp, "wb");
  std::fwrite(kTensorMagic, 1, 4, f);
  PutRaw<std::uint32_t>(f, kTensorVersion);
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(tf.meta.size()));
  for (const auto &[k, v] : tf.meta) {
    PutString(f, k);
    PutString(f, v);
  }
  PutRaw<std::uint32_t>(f, static_cast<std::uint32_t>(tf.tensors.size()));
  for (const auto &[name, m] : tf.tensors) {
    PutString(f, name);
    PutMatrix(f, m);
  }
  std::fclose(f);
  std::filesystem::rename(tmp, path);
}

TensorFile ReadTensorFile(const std::string &path) {
  std::FILE *f = OpenOrThrow(path, "rb");
  char magic[4];
  if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kTensorMagic, 4) != 0) {
    std::fclose(f);
    throw DataError(path + ": not a svkit tensor file");
  }
  std::uint32_t version = GetRaw<std::uint32_t>(f);
  if (version != kTensorVersion) {
    std::fclose(f);
    throw DataError(path + ": unsupported format version " + std::to_string(version));
  }
  TensorFile tf;
  std::uint32_t nmeta = GetRaw<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < nmeta; i++) {
    std::string k = GetString(f);
    tf.meta[k] = GetString(f);
  }
  std::uint32_t ntens = GetRaw<std::uint32_t>(f);
  for (std::uint32_t i = 0; i < ntens; i++) {
    std::string name = GetString(f);
    tf.tensors[name] = GetMatrix(f);
  }
  std::fclose(f);
  return tf;
}

// ---------------------------------------------------------------- text files

std::vector<Trial> ReadScoreFile(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open score file " + path);
  std::vector<Trial> out;
  Trial t;
  while (in >> t.enroll >> t.test >> t.score)
    out.push_back(t);
  return out;
}

void WriteScoreFile(const std::string &path, const std::vector<Trial> &trials) {
  std::ostringstream os;
  os.precision(17);
  for (const auto &t : trials)
    os << t.enroll << ' ' << t.test << ' ' << t.score << '\n';
  AtomicWriteText(path, os.str());
}

std::vector<Trial> ReadKeyFile(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open key file " + path);
  std::vector<Trial> out;
  std::string e, t, lab;
  while (in >> e >> t >> lab) {
    Trial tr;
    tr.enroll = e;
    tr.test = t;
    if (lab == "target")
      tr.label = 1;
    else if (lab == "nontarget")
      tr.label = 0;
    else
      throw DataError(path + ": bad trial label '" + lab + "'");
    out.push_back(tr);
  }
  return out;
}

std::vector<std::string> ReadIdList(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open list file " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.pop_back();
    if (!line.empty())
      ids.push_back(line);
  }
  return ids;
}

void AtomicWriteText(const std::string &path, const std::string &text) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out)
      throw DataError("cannot write " + tmp);
    out << text;
  }
  std::filesystem::rename(tmp, path);
}

std::string ReadTextFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace svkit
