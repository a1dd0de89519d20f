"""資料模組：試次載入、前處理、資料增強與合成資料集"""
